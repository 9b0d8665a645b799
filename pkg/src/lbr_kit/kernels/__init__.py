"""Hot-kernel dispatch: compiled extension when available, numpy fallback otherwise.

Set LBR_KIT_PURE=1 to force the pure-Python implementation; `IMPL` reports
which one is active ("cython" or "pure").
"""

import os

if os.environ.get("LBR_KIT_PURE", "") not in ("", "0"):
    from ._pure import (  # noqa: F401
        IMPL,
        fk_pose,
        impedance_torque,
        jacobian,
        position_step,
        torque_rollout,
        torque_step,
    )
else:
    try:
        from ._core import (  # type: ignore[attr-defined]  # noqa: F401
            IMPL,
            fk_pose,
            impedance_torque,
            jacobian,
            position_step,
            torque_rollout,
            torque_step,
        )
    except ImportError:
        from ._pure import (  # noqa: F401
            IMPL,
            fk_pose,
            impedance_torque,
            jacobian,
            position_step,
            torque_rollout,
            torque_step,
        )
