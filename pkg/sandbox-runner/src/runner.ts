/**
 * Child-process entry point: read one job from stdin, run it, print the
 * result as a single JSON line, exit. The dispatcher spawns a fresh copy
 * of this script per request so a crashing or hanging program never takes
 * anything else down with it.
 */

import { Job, JobResult, runJob } from "./execute";

function main(): void {
  const chunks: Buffer[] = [];
  process.stdin.on("data", (chunk) => chunks.push(chunk));
  process.stdin.on("end", () => {
    let result: JobResult;
    try {
      const job = JSON.parse(Buffer.concat(chunks).toString("utf-8")) as Job;
      result = runJob(job);
    } catch (err) {
      const detail = err instanceof Error ? err.message : String(err);
      result = { ok: false, error: `bad job payload: ${detail}` };
    }
    process.stdout.write(JSON.stringify(result) + "\n");
    process.exit(0);
  });
}

main();
