/**
 * Detector handles backed by the `ewmark` CLI's per-step protocol.
 *
 * A handle owns one `ewmark detect --per-step` subprocess: every fed
 * observation is one JSON line on its stdin, every response one JSON line on
 * its stdout.  All numerics therefore come from the engine itself — nothing
 * is re-implemented on this side of the boundary, and log-wealth values are
 * bit-identical to a CLI trace of the same stream.
 */

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface } from "node:readline";

export type Construction = "nonadaptive" | "weight-adaptive" | "og" | "average";
export type CalibratorName = "linear" | "sqrtinv" | "neglog" | "vs";
export type OgVariant = "ea" | "ea2";
export type VerdictStatus = "running" | "rejected" | "no_rejection";

export interface DetectorConfig {
  construction?: Construction;
  g?: CalibratorName;
  gamma?: number;
  lambda?: number;
  variant?: OgVariant;
  range?: [number, number] | null;
  alpha?: number;
  beta?: number;
  horizon?: number | null;
  /** Watermark key (hex); required for feedToken. */
  keyHex?: string;
  contextWindow?: number;
  /** Python interpreter used to run the core (default "python3"). */
  pythonPath?: string;
}

export interface StepResult {
  t: number;
  y: number;
  eValue: number;
  logM: number;
  verdict: VerdictStatus;
}

export interface FinalResult {
  verdict: VerdictStatus;
  stopIndex: number | null;
  finalLogM: number;
}

const CONSTRUCTIONS: readonly string[] = ["nonadaptive", "weight-adaptive", "og", "average"];
const CALIBRATORS: readonly string[] = ["linear", "sqrtinv", "neglog", "vs"];
const VARIANTS: readonly string[] = ["ea", "ea2"];

function validateConfig(config: DetectorConfig): Required<Pick<DetectorConfig, "alpha" | "beta">> & DetectorConfig {
  const alpha = config.alpha ?? 0.05;
  const beta = config.beta ?? 0.0;
  if (config.construction !== undefined && !CONSTRUCTIONS.includes(config.construction)) {
    throw new Error(`construction must be one of ${CONSTRUCTIONS.join(", ")}; got ${config.construction}`);
  }
  if (config.g !== undefined && !CALIBRATORS.includes(config.g)) {
    throw new Error(`g must be one of ${CALIBRATORS.join(", ")}; got ${config.g}`);
  }
  if (config.variant !== undefined && !VARIANTS.includes(config.variant)) {
    throw new Error(`variant must be one of ${VARIANTS.join(", ")}; got ${config.variant}`);
  }
  if (!(alpha > 0 && alpha < 1)) {
    throw new Error(`alpha must lie in (0, 1); got ${alpha}`);
  }
  if (!(beta >= 0 && beta < 1)) {
    throw new Error(`beta must lie in [0, 1); got ${beta}`);
  }
  if (config.gamma !== undefined && !(config.gamma > 0 && config.gamma <= 1)) {
    throw new Error(`gamma must lie in (0, 1]; got ${config.gamma}`);
  }
  if (config.lambda !== undefined && !(config.lambda >= 0 && config.lambda <= 1)) {
    throw new Error(`lambda must lie in [0, 1]; got ${config.lambda}`);
  }
  if (config.horizon !== undefined && config.horizon !== null && config.horizon < 1) {
    throw new Error(`horizon must be >= 1; got ${config.horizon}`);
  }
  if (config.range) {
    const [a, b] = config.range;
    if (!(a > 0 && a < 1 && b > 1)) {
      throw new Error(`range must satisfy 0 < a < 1 < b; got [${a}, ${b}]`);
    }
  }
  if (config.contextWindow !== undefined && config.contextWindow < 0) {
    throw new Error(`contextWindow must be >= 0; got ${config.contextWindow}`);
  }
  if (config.keyHex !== undefined && !/^[0-9a-fA-F]+$/.test(config.keyHex)) {
    throw new Error(`keyHex must be a hex string; got ${config.keyHex}`);
  }
  return { ...config, alpha, beta };
}

function cliArgs(config: DetectorConfig): string[] {
  const args = ["-m", "ewmark.cli", "detect", "--per-step"];
  if (config.construction) args.push("--detector", config.construction);
  if (config.g) args.push("--calibrator", config.g);
  if (config.gamma !== undefined) args.push("--gamma", String(config.gamma));
  if (config.lambda !== undefined) args.push("--lambda", String(config.lambda));
  if (config.variant) args.push("--og-variant", config.variant);
  if (config.range) args.push("--range", `${config.range[0]},${config.range[1]}`);
  args.push("--alpha", String(config.alpha ?? 0.05));
  args.push("--beta", String(config.beta ?? 0.0));
  if (config.horizon !== undefined && config.horizon !== null) {
    args.push("--horizon", String(config.horizon));
  }
  if (config.keyHex) {
    args.push("--key", config.keyHex);
    args.push("--context-window", String(config.contextWindow ?? 0));
  }
  return args;
}

interface Waiter {
  resolve: (r: StepResult) => void;
  reject: (e: Error) => void;
}

export class DetectorHandle {
  /** Config echo, with defaults applied. */
  readonly config: DetectorConfig;

  private proc: ChildProcessWithoutNullStreams;
  private waiters: Waiter[] = [];
  private stderrText = "";
  private closed = false;
  private decided: VerdictStatus = "running";
  private t = 0;
  private finalResult: FinalResult | null = null;
  private finalWaiters: Array<{ resolve: (r: FinalResult) => void; reject: (e: Error) => void }> = [];
  private exitError: Error | null = null;

  constructor(config: DetectorConfig) {
    this.config = validateConfig(config);
    const python = this.config.pythonPath ?? process.env.EWMARK_PYTHON ?? "python3";
    this.proc = spawn(python, cliArgs(this.config), { stdio: ["pipe", "pipe", "pipe"] });
    this.proc.stderr.on("data", (chunk) => {
      this.stderrText += chunk.toString();
    });
    const lines = createInterface({ input: this.proc.stdout });
    lines.on("line", (line) => this.onLine(line));
    this.proc.on("close", (code) => this.onClose(code));
    this.proc.on("error", (err) => this.failAll(new Error(`failed to start detector process: ${err.message}`)));
  }

  private onLine(line: string): void {
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(line);
    } catch {
      return;
    }
    if (typeof obj.t === "number") {
      const result: StepResult = {
        t: obj.t,
        y: obj.y as number,
        eValue: obj.e_value as number,
        logM: obj.log_m as number,
        verdict: obj.verdict as VerdictStatus,
      };
      if (result.verdict !== "running") {
        this.decided = result.verdict;
      }
      this.waiters.shift()?.resolve(result);
    } else if (typeof obj.verdict === "string") {
      this.finalResult = {
        verdict: obj.verdict as VerdictStatus,
        stopIndex: (obj.stop_index as number | null) ?? null,
        finalLogM: obj.final_log_m as number,
      };
      for (const w of this.finalWaiters.splice(0)) {
        w.resolve(this.finalResult);
      }
    }
  }

  private onClose(code: number | null): void {
    if (code !== 0 && code !== null && this.exitError === null) {
      this.exitError = new Error(
        `detector process exited with code ${code}: ${this.stderrText.trim()}`,
      );
    }
    const err = this.exitError ?? new Error("detector process closed unexpectedly");
    this.failAll(err);
  }

  private failAll(err: Error): void {
    for (const w of this.waiters.splice(0)) {
      w.reject(err);
    }
    if (this.finalResult === null) {
      for (const w of this.finalWaiters.splice(0)) {
        w.reject(err);
      }
    }
  }

  private send(record: Record<string, unknown>): Promise<StepResult> {
    if (this.closed) {
      return Promise.reject(new Error("handle is closed"));
    }
    if (this.decided !== "running") {
      return Promise.reject(new Error(`detector already terminated (${this.decided})`));
    }
    return new Promise((resolve, reject) => {
      this.waiters.push({ resolve, reject });
      this.proc.stdin.write(JSON.stringify(record) + "\n", (err) => {
        if (err) {
          const i = this.waiters.findIndex((w) => w.reject === reject);
          if (i >= 0) this.waiters.splice(i, 1);
          reject(new Error(`failed to write to detector: ${err.message}`));
        }
      });
    });
  }

  /** Feed one pivotal value in [0, 1]. */
  feed(y: number): Promise<StepResult> {
    if (!Number.isFinite(y) || y < 0 || y > 1) {
      return Promise.reject(new Error(`y must lie in [0, 1]; got ${y}`));
    }
    this.t += 1;
    return this.send({ step: this.t, token_id: 0, y });
  }

  /**
   * Feed one token id; the core recomputes the pivotal value from the
   * configured key (and tracked or explicit context) before stepping.
   */
  feedToken(tokenId: number, opts?: { context?: number[]; step?: number }): Promise<StepResult> {
    if (!this.config.keyHex) {
      return Promise.reject(new Error("feedToken requires keyHex in the detector config"));
    }
    if (!Number.isInteger(tokenId) || tokenId < 0) {
      return Promise.reject(new Error(`tokenId must be a nonnegative integer; got ${tokenId}`));
    }
    this.t += 1;
    const record: Record<string, unknown> = { step: opts?.step ?? this.t, token_id: tokenId };
    if (opts?.context) {
      record.context = opts.context;
    }
    return this.send(record);
  }

  /** End the stream and return the final verdict. The handle is unusable afterwards. */
  close(): Promise<FinalResult> {
    if (this.closed) {
      return Promise.reject(new Error("handle is closed"));
    }
    this.closed = true;
    if (this.finalResult !== null) {
      return Promise.resolve(this.finalResult);
    }
    return new Promise((resolve, reject) => {
      this.finalWaiters.push({ resolve, reject });
      this.proc.stdin.end();
    });
  }
}

/** Open a fresh detector (t = 0, M = 1) over the given config. */
export function openDetector(config: DetectorConfig = {}): DetectorHandle {
  return new DetectorHandle(config);
}
