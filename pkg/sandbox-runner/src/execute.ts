/**
 * Compile-and-run for one candidate program. Kept separate from the child
 * entry script so it can be unit-tested in-process.
 *
 * The program text must define a function named `transform` taking a list
 * of integers and returning a list of integers; the list is copied before
 * the call so a mutating program cannot corrupt the caller's view.
 */

import { INVALID_SHAPE_MESSAGE, checkShape } from "./protocol";

export interface Job {
  program: string;
  input: number[];
}

export interface JobResult {
  ok: boolean;
  output?: number[];
  error?: string;
}

function message(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}

export function runJob(job: Job): JobResult {
  let entry: unknown;
  try {
    const factory = new Function(
      `"use strict";\n${job.program}\n;return typeof transform === "function" ? transform : undefined;`,
    );
    entry = factory();
  } catch (err) {
    return { ok: false, error: `program failed to compile: ${message(err)}` };
  }
  if (typeof entry !== "function") {
    return {
      ok: false,
      error: 'program does not define a function named "transform"',
    };
  }
  let raw: unknown;
  try {
    raw = (entry as (xs: number[]) => unknown)(job.input.slice());
  } catch (err) {
    return { ok: false, error: `program raised: ${message(err)}` };
  }
  const output = checkShape(raw);
  if (output === null) {
    return { ok: false, error: INVALID_SHAPE_MESSAGE };
  }
  return { ok: true, output };
}
