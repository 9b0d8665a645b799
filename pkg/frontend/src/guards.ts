/**
 * Command guard and smoothing filter.
 *
 * These mirror the controller stack's client pipeline operation for
 * operation: every arithmetic expression keeps the same shape and order so
 * both implementations produce bit-identical IEEE-754 results.
 */

import { CommandMessage } from "./wire";

export interface GuardConfig {
  positionLimits: ReadonlyArray<readonly [number, number]>;
  velocityLimits: readonly number[];
  torqueLimits: readonly number[];
}

function clamp(value: number, lo: number, hi: number): number {
  if (value < lo) return lo;
  if (value > hi) return hi;
  return value;
}

export function guardCommand(
  cmd: CommandMessage,
  previousPosition: readonly number[],
  samplePeriod: number,
  cfg: GuardConfig,
): CommandMessage {
  const out: CommandMessage = { ...cmd };
  if (cmd.jointPosition !== undefined) {
    const guarded: number[] = [];
    for (let j = 0; j < cmd.jointPosition.length; j++) {
      let value = cmd.jointPosition[j];
      const [lo, hi] = cfg.positionLimits[j];
      value = clamp(value, lo, hi);
      const stepCap = cfg.velocityLimits[j] * samplePeriod;
      const prev = previousPosition[j];
      value = prev + clamp(value - prev, -stepCap, stepCap);
      guarded.push(value);
    }
    out.jointPosition = guarded;
  }
  if (cmd.torqueOverlay !== undefined) {
    out.torqueOverlay = cmd.torqueOverlay.map((t, j) =>
      clamp(t, -cfg.torqueLimits[j], cfg.torqueLimits[j]),
    );
  }
  return out;
}

export class ExponentialFilter {
  private previous: number[] | null = null;

  constructor(readonly alpha: number) {
    if (!(alpha >= 0 && alpha <= 1)) {
      throw new RangeError(`filter alpha must be in [0, 1], got ${alpha}`);
    }
  }

  step(values: readonly number[]): number[] {
    let out: number[];
    if (this.previous === null) {
      out = [...values];
    } else {
      const a = this.alpha;
      out = values.map((x, j) => a * x + (1.0 - a) * this.previous![j]);
    }
    this.previous = out;
    return out;
  }

  reset(): void {
    this.previous = null;
  }
}
