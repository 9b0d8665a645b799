import { describe, expect, it } from "vitest";

import { MED7_POSITION_LIMITS, MED7_TORQUE_LIMITS, MED7_VELOCITY_LIMITS } from "../src/constants";
import { ExponentialFilter, guardCommand } from "../src/guards";
import { portableSin, TWO_PI } from "../src/portableSin";
import { positionCommand, torqueCommand } from "../src/client";

const GUARD = {
  positionLimits: MED7_POSITION_LIMITS,
  velocityLimits: MED7_VELOCITY_LIMITS,
  torqueLimits: MED7_TORQUE_LIMITS,
};

describe("guardCommand", () => {
  it("clamps to the position limit", () => {
    const out = guardCommand(positionCommand([3.1, 0, 0, 0, 0, 0, 0]), [2.9, 0, 0, 0, 0, 0, 0], 10.0, GUARD);
    expect(out.jointPosition![0]).toBe(2.9670597283903604);
  });

  it("rate-limits steps away from the previous position", () => {
    const cfg = { ...GUARD, velocityLimits: [1, 1, 1, 1, 1, 1, 1] };
    const out = guardCommand(positionCommand([0.1, 0, 0, 0, 0, 0, 0]), [0, 0, 0, 0, 0, 0, 0], 0.005, cfg);
    expect(out.jointPosition![0]).toBe(0.005);
  });

  it("saturates torque overlays", () => {
    const out = guardCommand(
      torqueCommand([0, 0, 0, 0, 0, 0, 0], [150, -150, 0, 0, 0, 0, 0]),
      [0, 0, 0, 0, 0, 0, 0],
      0.005,
      GUARD,
    );
    expect(out.torqueOverlay![0]).toBe(100);
    expect(out.torqueOverlay![1]).toBe(-100);
  });

  it("is idempotent", () => {
    const prev = [0.2, -0.1, 0.4, 1.2, 0, 0.5, -0.5];
    const once = guardCommand(positionCommand([2, -3, 4, 1.3, 0.1, 0.5, -0.6]), prev, 0.005, GUARD);
    const twice = guardCommand(once, prev, 0.005, GUARD);
    expect(twice.jointPosition).toEqual(once.jointPosition);
  });
});

describe("ExponentialFilter", () => {
  it("passes the first sample through", () => {
    const f = new ExponentialFilter(0.2);
    expect(f.step([3, 3, 3, 3, 3, 3, 3])).toEqual([3, 3, 3, 3, 3, 3, 3]);
  });

  it("follows the recurrence", () => {
    const f = new ExponentialFilter(0.5);
    f.step([0, 0, 0, 0, 0, 0, 0]);
    expect(f.step([1, 1, 1, 1, 1, 1, 1])[0]).toBe(0.5);
    expect(f.step([1, 1, 1, 1, 1, 1, 1])[0]).toBe(0.75);
  });

  it("rejects alpha outside [0, 1]", () => {
    expect(() => new ExponentialFilter(1.5)).toThrow(RangeError);
  });
});

describe("portableSin", () => {
  it("is accurate to 1e-11", () => {
    for (let k = 0; k <= 1000; k++) {
      const x = -15 + (30 * k) / 1000;
      expect(Math.abs(portableSin(x) - Math.sin(x))).toBeLessThan(1e-11);
    }
  });

  it("hits exact zeros of the reduction", () => {
    expect(portableSin(0)).toBe(0);
    expect(Math.abs(portableSin(TWO_PI))).toBeLessThan(1e-15);
  });
});
