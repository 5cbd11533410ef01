"""Few-shot list-function induction with LLM-guided hypothesis search.

The package is organized around a deterministic offline substrate (a small
list-transformation DSL plus record/replay providers) so that the whole
pipeline -- hypothesis generation, summarization, program implementation
with bounded refinement, trial protocol, and error analysis -- can run and
be tested without any live model.
"""

__version__ = "0.1.0"
