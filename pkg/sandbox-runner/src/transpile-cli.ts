/** CLI shim: print the JavaScript form of a pipeline program to stdout. */

import { TranspileError, transpile } from "./transpile";

const text = process.argv.slice(2).join(" ").trim();
if (!text) {
  process.stderr.write("usage: transpile-cli.js '<program text>'\n");
  process.exit(2);
}
try {
  process.stdout.write(transpile(text) + "\n");
} catch (err) {
  if (err instanceof TranspileError) {
    process.stderr.write(`transpile error: ${err.message}\n`);
    process.exit(1);
  }
  throw err;
}
