/**
 * Deterministic sine built from exactly-rounded IEEE-754 operations only
 * (floor, +, -, *), matching the controller stack's waveform generator bit
 * for bit. Absolute error stays below 1e-11 on the reduced domain.
 */

export const TWO_PI = 6.283185307179586;
const PI = 3.141592653589793;
const HALF_PI = 1.5707963267948966;
const INV_TWO_PI = 0.15915494309189535;

const C3 = -0.16666666666666666;
const C5 = 0.008333333333333333;
const C7 = -0.0001984126984126984;
const C9 = 2.755731922398589e-6;
const C11 = -2.505210838544172e-8;
const C13 = 1.6059043836821613e-10;
const C15 = -7.647163731819816e-13;

export function portableSin(x: number): number {
  const k = Math.floor(x * INV_TWO_PI + 0.5);
  let r = x - k * TWO_PI;
  if (r > HALF_PI) {
    r = PI - r;
  } else if (r < -HALF_PI) {
    r = -PI - r;
  }
  const y = r * r;
  let p = C15;
  p = C13 + y * p;
  p = C11 + y * p;
  p = C9 + y * p;
  p = C7 + y * p;
  p = C5 + y * p;
  p = C3 + y * p;
  const t = y * p;
  return r + r * t;
}
