/**
 * Line-delimited JSON protocol between the orchestrator and this worker.
 *
 * One request per line on stdin, one response per line on stdout, emitted
 * in request order. A line that cannot be attributed to a request id is
 * answered under id -1 so the two streams never drift; a well-formed line
 * whose id is usable but whose other fields are broken is answered under
 * its own id for the same reason.
 */

export interface WorkRequest {
  id: number;
  program: string;
  input: number[];
  timeoutMs: number;
}

export interface OkResponse {
  id: number;
  status: "ok";
  output: number[];
}

export interface ErrorResponse {
  id: number;
  status: "error";
  error: string;
}

export type WorkResponse = OkResponse | ErrorResponse;

export const DEFAULT_TIMEOUT_MS = 2000;
export const MALFORMED_ID = -1;
export const INVALID_SHAPE_MESSAGE = "invalid output shape";

export type ParseOutcome =
  | { kind: "request"; request: WorkRequest }
  | { kind: "invalid"; id: number; error: string };

function invalid(id: number, error: string): ParseOutcome {
  return { kind: "invalid", id, error };
}

function isIntegerArray(value: unknown): value is number[] {
  return (
    Array.isArray(value) &&
    value.every((v) => typeof v === "number" && Number.isSafeInteger(v))
  );
}

export function parseRequestLine(line: string): ParseOutcome {
  let data: unknown;
  try {
    data = JSON.parse(line);
  } catch (err) {
    return invalid(MALFORMED_ID, `malformed request: ${(err as Error).message}`);
  }
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    return invalid(MALFORMED_ID, "malformed request: not a JSON object");
  }
  const record = data as Record<string, unknown>;
  const id = record.id;
  if (typeof id !== "number" || !Number.isSafeInteger(id)) {
    return invalid(MALFORMED_ID, "malformed request: missing integer id");
  }
  if (typeof record.program !== "string") {
    return invalid(id, "request.program must be a string");
  }
  if (!isIntegerArray(record.input)) {
    return invalid(id, "request.input must be a list of integers");
  }
  let timeoutMs = DEFAULT_TIMEOUT_MS;
  if (record.timeout_ms !== undefined) {
    if (
      typeof record.timeout_ms !== "number" ||
      !Number.isSafeInteger(record.timeout_ms) ||
      record.timeout_ms <= 0
    ) {
      return invalid(id, "request.timeout_ms must be a positive integer");
    }
    timeoutMs = record.timeout_ms;
  }
  return {
    kind: "request",
    request: { id, program: record.program, input: record.input, timeoutMs },
  };
}

export function okResponse(id: number, output: number[]): WorkResponse {
  return { id, status: "ok", output };
}

export function errorResponse(id: number, error: string): WorkResponse {
  return { id, status: "error", error };
}

export function serializeResponse(response: WorkResponse): string {
  return JSON.stringify(response) + "\n";
}

/** Accept only a flat array of integers; anything else is a shape error. */
export function checkShape(value: unknown): number[] | null {
  if (!Array.isArray(value)) {
    return null;
  }
  const out: number[] = [];
  for (const v of value) {
    if (typeof v !== "number" || !Number.isInteger(v)) {
      return null;
    }
    out.push(v);
  }
  return out;
}
