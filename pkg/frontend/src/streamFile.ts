/**
 * File adapter for the JSONL pivotal-record format written by
 * `ewmark generate` ({"step", "token_id", "y"} per line).
 */

import { readFileSync } from "node:fs";

import { openDetector, type DetectorConfig, type FinalResult, type StepResult } from "./detector.js";

export interface PivotalRecord {
  step: number;
  tokenId: number;
  y: number;
}

export function readPivotalStream(path: string): PivotalRecord[] {
  const records: PivotalRecord[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`malformed stream record at line ${i + 1}: ${(err as Error).message}`);
    }
    const step = obj.step;
    const y = obj.y;
    if (typeof step !== "number" || typeof y !== "number" || y < 0 || y > 1) {
      throw new Error(`malformed stream record at line ${i + 1}`);
    }
    records.push({ step, tokenId: (obj.token_id as number) ?? -1, y });
  }
  return records;
}

export interface FileDetectionResult {
  final: FinalResult;
  steps: StepResult[];
}

/** Run a detector over a stream file; stops at the first decisive verdict. */
export async function detectStreamFile(
  path: string,
  config: DetectorConfig = {},
): Promise<FileDetectionResult> {
  const records = readPivotalStream(path);
  const handle = openDetector(config);
  const steps: StepResult[] = [];
  for (const rec of records) {
    const result = await handle.feed(rec.y);
    steps.push(result);
    if (result.verdict !== "running") {
      break;
    }
  }
  const final = await handle.close();
  return { final, steps };
}
