/**
 * Compile the pipeline mini-language used by the orchestrator's builtin
 * backend into a JavaScript program defining `transform`, so the same
 * candidate can be executed by the sandbox worker and compared against the
 * reference interpreter.
 *
 * The generated code mirrors the interpreter's conventions exactly:
 * element arithmetic saturates at +/-(2^31 - 1), modulo follows the sign
 * of the divisor, positions are 1-based and clamped, and count arguments
 * below zero degrade the same way (`take -1` empties, `drop -1` is the
 * identity). Arithmetic runs in BigInt before saturation so oversized
 * literals and products cannot lose precision on the way to the clamp.
 */

export class TranspileError extends Error {}

export interface StageSpec {
  name: string;
  args: bigint[];
}

export const ARITY: Record<string, number> = {
  identity: 0,
  reverse: 0,
  sort: 0,
  unique: 0,
  head: 0,
  tail: 0,
  last: 0,
  init: 0,
  length: 0,
  sum: 0,
  max: 0,
  min: 0,
  take: 1,
  drop: 1,
  append: 1,
  prepend: 1,
  remove: 1,
  count: 1,
  add: 1,
  sub: 1,
  mul: 1,
  mod: 1,
  rotate_left: 1,
  rotate_right: 1,
  repeat: 1,
  filter_even: 0,
  filter_odd: 0,
  filter_gt: 1,
  filter_lt: 1,
  index: 1,
  slice: 2,
  replace: 2,
  insert: 2,
  concat_self: 0,
};

export function parseProgram(text: string): StageSpec[] {
  const chunks = text.split("|").map((chunk) => chunk.trim());
  if (chunks.some((chunk) => chunk.length === 0)) {
    throw new TranspileError("empty stage (stray or trailing '|'?)");
  }
  return chunks.map((chunk) => {
    const tokens = chunk.split(/\s+/);
    const name = tokens[0];
    const arity = ARITY[name];
    if (arity === undefined) {
      throw new TranspileError(`unknown primitive '${name}'`);
    }
    const raw = tokens.slice(1);
    if (raw.length !== arity) {
      throw new TranspileError(
        `${name} takes ${arity} argument(s), got ${raw.length}`,
      );
    }
    const args = raw.map((token) => {
      if (!/^-?\d+$/.test(token)) {
        throw new TranspileError(`bad integer argument '${token}'`);
      }
      return BigInt(token);
    });
    if (name === "mod" && args[0] === 0n) {
      throw new TranspileError("mod argument must be nonzero");
    }
    if (name === "repeat" && args[0] < 0n) {
      throw new TranspileError("repeat argument must be >= 0");
    }
    return { name, args };
  });
}

// Runtime shipped inside every generated program. Values stay plain
// numbers between stages; BigInt is used inside the ops that can overflow.
const RUNTIME = `const SAT = 2147483647n;
const clamp = (v) => (v > SAT ? SAT : v < -SAT ? -SAT : v);
const sat = (v) => Number(clamp(v));
const pymod = (x, m) => {
  let r = BigInt(x) % m;
  if (r !== 0n && (r < 0n) !== (m < 0n)) r += m;
  return Number(r);
};
const MAX_COUNT = 9007199254740991n;
const toCount = (v) => {
  if (v > MAX_COUNT) return Number(MAX_COUNT);
  if (v < -MAX_COUNT) return -Number(MAX_COUNT);
  return Number(v);
};
const rotate = (xs, k) => {
  if (xs.length === 0) return [];
  const n = BigInt(xs.length);
  let r = k % n;
  if (r < 0n) r += n;
  const at = Number(r);
  return xs.slice(at).concat(xs.slice(0, at));
};
const OPS = {
  identity: (xs) => xs.slice(),
  reverse: (xs) => xs.slice().reverse(),
  sort: (xs) => xs.slice().sort((a, b) => a - b),
  unique: (xs) => {
    const seen = new Set();
    const out = [];
    for (const x of xs) {
      if (!seen.has(x)) {
        seen.add(x);
        out.push(x);
      }
    }
    return out;
  },
  head: (xs) => xs.slice(0, 1),
  tail: (xs) => xs.slice(1),
  last: (xs) => xs.slice(-1),
  init: (xs) => xs.slice(0, -1),
  length: (xs) => [xs.length],
  sum: (xs) => [sat(xs.reduce((acc, x) => acc + BigInt(x), 0n))],
  max: (xs) => (xs.length ? [xs.reduce((a, b) => (b > a ? b : a))] : []),
  min: (xs) => (xs.length ? [xs.reduce((a, b) => (b < a ? b : a))] : []),
  take: (xs, a) => xs.slice(0, Math.max(toCount(a), 0)),
  drop: (xs, a) => xs.slice(Math.max(toCount(a), 0)),
  append: (xs, a) => xs.concat([sat(a)]),
  prepend: (xs, a) => [sat(a)].concat(xs),
  remove: (xs, a) => xs.filter((x) => BigInt(x) !== a),
  count: (xs, a) => [xs.filter((x) => BigInt(x) === a).length],
  add: (xs, a) => xs.map((x) => sat(BigInt(x) + a)),
  sub: (xs, a) => xs.map((x) => sat(BigInt(x) - a)),
  mul: (xs, a) => xs.map((x) => sat(BigInt(x) * a)),
  mod: (xs, a) => xs.map((x) => pymod(x, a)),
  rotate_left: (xs, a) => rotate(xs, a),
  rotate_right: (xs, a) => rotate(xs, -a),
  repeat: (xs, a) => {
    const n = toCount(a);
    const out = [];
    for (let i = 0; i < n; i++) {
      for (const x of xs) out.push(x);
    }
    return out;
  },
  filter_even: (xs) => xs.filter((x) => x % 2 === 0),
  filter_odd: (xs) => xs.filter((x) => x % 2 !== 0),
  filter_gt: (xs, a) => xs.filter((x) => BigInt(x) > a),
  filter_lt: (xs, a) => xs.filter((x) => BigInt(x) < a),
  index: (xs, a) => {
    const i = toCount(a);
    return i >= 1 && i <= xs.length ? [xs[i - 1]] : [];
  },
  slice: (xs, a, b) => {
    const lo = Math.max(toCount(a), 1);
    const hi = Math.min(toCount(b), xs.length);
    return lo > hi ? [] : xs.slice(lo - 1, hi);
  },
  replace: (xs, a, b) => xs.map((x) => (BigInt(x) === a ? sat(b) : x)),
  insert: (xs, a, b) => {
    const pos = Math.min(Math.max(toCount(a), 1), xs.length + 1);
    return xs.slice(0, pos - 1).concat([sat(b)], xs.slice(pos - 1));
  },
  concat_self: (xs) => xs.concat(xs),
};`;

export function transpile(text: string): string {
  const stages = parseProgram(text);
  const calls = stages.map(({ name, args }) => {
    const literals = args.map((arg) => `${arg}n`);
    return `  xs = OPS[${JSON.stringify(name)}](${["xs", ...literals].join(", ")});`;
  });
  return [
    `// generated from: ${text.replace(/\s+/g, " ").trim()}`,
    RUNTIME,
    "function transform(input) {",
    "  let xs = input.slice();",
    ...calls,
    "  return xs;",
    "}",
  ].join("\n");
}
