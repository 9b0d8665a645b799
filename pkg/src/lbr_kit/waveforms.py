"""Demo setpoint waveforms.

portable_sin is a deterministic sine built only from exactly-rounded IEEE-754
double operations (floor, +, -, *), so any runtime that re-implements the
same sequence of operations produces bit-identical values. Client demos use
it instead of the platform libm, which keeps transmitted command traces
reproducible across independent client implementations. Absolute error is
below 1e-11 on the reduced domain, far under any control tolerance here.
"""

import math

TWO_PI = 6.283185307179586
PI = 3.141592653589793
HALF_PI = 1.5707963267948966
INV_TWO_PI = 0.15915494309189535

# Odd Taylor coefficients of sine: -1/3!, 1/5!, -1/7!, ... down to -1/15!.
_C3 = -0.16666666666666666
_C5 = 0.008333333333333333
_C7 = -0.0001984126984126984
_C9 = 2.755731922398589e-06
_C11 = -2.505210838544172e-08
_C13 = 1.6059043836821613e-10
_C15 = -7.647163731819816e-13


def portable_sin(x: float) -> float:
    k = math.floor(x * INV_TWO_PI + 0.5)
    r = x - k * TWO_PI
    if r > HALF_PI:
        r = PI - r
    elif r < -HALF_PI:
        r = -PI - r
    y = r * r
    p = _C15
    p = _C13 + y * p
    p = _C11 + y * p
    p = _C9 + y * p
    p = _C7 + y * p
    p = _C5 + y * p
    p = _C3 + y * p
    t = y * p
    return r + r * t


def sine_offset(amplitude: float, frequency: float, t: float) -> float:
    """Deviation of the sine demo from its start position at time t."""
    phase = (TWO_PI * frequency) * t
    return amplitude * portable_sin(phase)
