/**
 * Dispatcher entry point. Reads NDJSON work requests from stdin, executes
 * each program in a fresh child process under a wall-clock timeout and a
 * V8 heap cap, and writes one NDJSON response per request in request
 * order. Exits 0 when stdin closes.
 *
 * Usage: node worker.js [--memory-mib N] [--self-test]
 *
 * The heap cap applies to the children running untrusted programs; the
 * dispatcher itself only shuttles JSON lines. Set SANDBOX_RUNNER_JS to
 * point at an alternative child script (used by the self-test tests).
 */

import { spawn } from "node:child_process";
import * as path from "node:path";
import * as readline from "node:readline";

import {
  WorkRequest,
  WorkResponse,
  errorResponse,
  okResponse,
  parseRequestLine,
  serializeResponse,
  checkShape,
  INVALID_SHAPE_MESSAGE,
} from "./protocol";

export const DEFAULT_MEMORY_MIB = 256;
const STDERR_TAIL_CHARS = 200;

export interface WorkerOptions {
  memoryMib: number;
  runnerPath: string;
}

interface ChildResult {
  output?: number[];
  error?: string;
}

function describeExit(code: number | null, signal: string | null): string {
  if (signal !== null) {
    return `signal ${signal}`;
  }
  return `exit code ${code}`;
}

/** Run one program in a fresh child; resolves with output or an error. */
export function runInChild(
  request: Pick<WorkRequest, "program" | "input" | "timeoutMs">,
  options: WorkerOptions,
): Promise<ChildResult> {
  return new Promise((resolve) => {
    const child = spawn(
      process.execPath,
      [`--max-old-space-size=${options.memoryMib}`, options.runnerPath],
      { stdio: ["pipe", "pipe", "pipe"] },
    );
    let stdout = "";
    let stderr = "";
    let timedOut = false;
    let settled = false;

    const finish = (result: ChildResult) => {
      if (!settled) {
        settled = true;
        resolve(result);
      }
    };

    const timer = setTimeout(() => {
      timedOut = true;
      child.kill("SIGKILL");
    }, request.timeoutMs);

    child.stdout.on("data", (chunk) => {
      stdout += chunk.toString();
    });
    child.stderr.on("data", (chunk) => {
      if (stderr.length < 4096) {
        stderr += chunk.toString();
      }
    });
    child.on("error", (err) => {
      clearTimeout(timer);
      finish({ error: `failed to spawn sandbox child: ${err.message}` });
    });
    child.on("close", (code, signal) => {
      clearTimeout(timer);
      if (timedOut) {
        finish({ error: `timeout after ${request.timeoutMs} ms` });
        return;
      }
      const line = stdout.split("\n", 1)[0];
      let reply: { ok?: unknown; output?: unknown; error?: unknown };
      try {
        reply = JSON.parse(line);
      } catch {
        const tail = stderr.trim().slice(0, STDERR_TAIL_CHARS);
        const detail = tail ? `: ${tail}` : "";
        finish({
          error: `sandbox child died without replying (${describeExit(code, signal)})${detail}`,
        });
        return;
      }
      if (reply.ok === true) {
        const output = checkShape(reply.output);
        finish(output === null ? { error: INVALID_SHAPE_MESSAGE } : { output });
      } else {
        finish({ error: String(reply.error ?? "unknown child error") });
      }
    });

    child.stdin.on("error", () => {
      // the child can die before reading its job; close handles the rest
    });
    child.stdin.write(
      JSON.stringify({ program: request.program, input: request.input }) + "\n",
    );
    child.stdin.end();
  });
}

/** Single-threaded request loop; resolves when stdin closes and all pending work is answered. */
export function serve(
  input: NodeJS.ReadableStream,
  output: NodeJS.WritableStream,
  options: WorkerOptions,
): Promise<void> {
  const lines = readline.createInterface({ input, crlfDelay: Infinity });
  let chain: Promise<void> = Promise.resolve();

  const respond = (response: WorkResponse) => {
    output.write(serializeResponse(response));
  };

  lines.on("line", (line) => {
    if (!line.trim()) {
      return;
    }
    chain = chain.then(async () => {
      const parsed = parseRequestLine(line);
      if (parsed.kind === "invalid") {
        respond(errorResponse(parsed.id, parsed.error));
        return;
      }
      const { id } = parsed.request;
      const result = await runInChild(parsed.request, options);
      if (result.output !== undefined) {
        respond(okResponse(id, result.output));
      } else {
        respond(errorResponse(id, result.error ?? "unknown sandbox error"));
      }
    });
  });

  return new Promise((resolve) => {
    lines.on("close", () => {
      void chain.then(resolve);
    });
  });
}

interface SelfTestCheck {
  name: string;
  program: string;
  input: number[];
  timeoutMs: number;
  verify: (result: ChildResult, elapsedMs: number) => string | null;
}

const SELF_TEST_CHECKS: SelfTestCheck[] = [
  {
    name: "compile and run",
    program: "function transform(xs) { return xs.slice().reverse(); }",
    input: [1, 2, 3],
    timeoutMs: 5000,
    verify: (result) =>
      JSON.stringify(result.output) === "[3,2,1]"
        ? null
        : `expected [3,2,1], got ${JSON.stringify(result)}`,
  },
  {
    name: "timeout containment",
    program: "function transform(xs) { for (;;) {} }",
    input: [1],
    timeoutMs: 500,
    verify: (result, elapsedMs) => {
      if (!result.error || !result.error.includes("timeout")) {
        return `expected a timeout error, got ${JSON.stringify(result)}`;
      }
      if (elapsedMs >= 1000) {
        return `took ${elapsedMs.toFixed(0)} ms against a 500 ms limit`;
      }
      return null;
    },
  },
  {
    name: "output shape validation",
    program: 'function transform(xs) { return "zero"; }',
    input: [],
    timeoutMs: 5000,
    verify: (result) =>
      result.error === INVALID_SHAPE_MESSAGE
        ? null
        : `expected shape error, got ${JSON.stringify(result)}`,
  },
  {
    name: "entry point required",
    program: "function mangle(xs) { return xs; }",
    input: [1],
    timeoutMs: 5000,
    verify: (result) =>
      result.error && result.error.includes("transform")
        ? null
        : `expected a missing-transform error, got ${JSON.stringify(result)}`,
  },
  {
    name: "crash isolation",
    program: 'function transform(xs) { throw new Error("boom"); }',
    input: [1],
    timeoutMs: 5000,
    verify: (result) =>
      result.error && result.error.includes("program raised")
        ? null
        : `expected a raised-program error, got ${JSON.stringify(result)}`,
  },
];

export async function selfTest(options: WorkerOptions): Promise<number> {
  let failures = 0;
  for (const check of SELF_TEST_CHECKS) {
    const started = Date.now();
    const result = await runInChild(
      { program: check.program, input: check.input, timeoutMs: check.timeoutMs },
      options,
    );
    const problem = check.verify(result, Date.now() - started);
    if (problem === null) {
      process.stdout.write(`ok - ${check.name}\n`);
    } else {
      failures += 1;
      process.stdout.write(`FAIL - ${check.name}: ${problem}\n`);
    }
  }
  return failures === 0 ? 0 : 1;
}

function usage(): never {
  process.stderr.write("usage: worker.js [--memory-mib N] [--self-test]\n");
  process.exit(2);
}

function main(): void {
  const argv = process.argv.slice(2);
  let memoryMib = DEFAULT_MEMORY_MIB;
  let runSelfTest = false;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--memory-mib") {
      const raw = argv[++i];
      memoryMib = Number(raw);
      if (!Number.isSafeInteger(memoryMib) || memoryMib <= 0) {
        usage();
      }
    } else if (argv[i] === "--self-test") {
      runSelfTest = true;
    } else {
      usage();
    }
  }
  const options: WorkerOptions = {
    memoryMib,
    runnerPath: process.env.SANDBOX_RUNNER_JS ?? path.join(__dirname, "runner.js"),
  };
  if (runSelfTest) {
    void selfTest(options).then((code) => process.exit(code));
  } else {
    void serve(process.stdin, process.stdout, options).then(() => process.exit(0));
  }
}

main();
