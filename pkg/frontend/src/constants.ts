/**
 * med7 guard limits, frozen to the exact double values the controller stack
 * derives from its shipped variant config (decimal reprs round-trip exactly).
 */

export const MED7_POSITION_LIMITS: ReadonlyArray<readonly [number, number]> = [
  [-2.9670597283903604, 2.9670597283903604],
  [-2.0943951023931953, 2.0943951023931953],
  [-2.9670597283903604, 2.9670597283903604],
  [-2.0943951023931953, 2.0943951023931953],
  [-2.9670597283903604, 2.9670597283903604],
  [-2.0943951023931953, 2.0943951023931953],
  [-3.0543261909900767, 3.0543261909900767],
];

export const MED7_VELOCITY_LIMITS: readonly number[] = [
  1.4835298641951802, 1.4835298641951802, 1.4835298641951802, 1.4835298641951802,
  1.4835298641951802, 1.4835298641951802, 1.4835298641951802,
];

export const MED7_TORQUE_LIMITS: readonly number[] = [
  100.0, 100.0, 100.0, 100.0, 100.0, 100.0, 100.0,
];

export const DEFAULT_FILTER_ALPHA = 0.2;
