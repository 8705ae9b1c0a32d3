"""Closed vocabularies: atomic action types, motion types, grasps, failure kinds.

The atomic-action-to-motion mapping is the contract that guarantees every
expanded plan bottoms out in executable motions; adding a new atomic action
type means registering it here.
"""

from __future__ import annotations

# atomic action type -> motion designator type
ATOMIC_TO_MOTION: dict[str, str] = {
    "closing": "closing",
    "detecting": "detecting",
    "going": "going",
    "grasping": "moving-tcp",
    "gripping": "gripping",
    "lifting": "moving-tcp",
    "looking": "looking",
    "opening": "opening",
    "pulling": "moving-tcp",
    "pushing": "moving-tcp",
    "putting": "moving-tcp",
    "reaching": "moving-tcp",
    "releasing": "opening",
    "retracting": "moving-tcp",
    "setting-gripper": "moving-gripper-joint",
}

MOTION_TYPES: tuple[str, ...] = (
    "going", "looking", "detecting", "moving-tcp", "gripping", "opening",
    "closing", "moving-torso", "moving-arm-joints", "moving-gripper-joint",
)

DESIGNATOR_KINDS = ("action", "motion", "location", "object")

GRASPS = ("top", "side", "handle", "two-hand")
ARMS = ("left", "right", "both")

FAILURE_KINDS = (
    "unreachable", "collision", "perception-failure", "object-slipped",
    "no-solution", "timeout",
)

# preferred grasps per object category; order matters for candidate streams
CATEGORY_GRASPS: dict[str, tuple[str, ...]] = {
    "spoon": ("top",),
    "fork": ("top",),
    "knife": ("top",),
    "plate": ("top",),
    "bowl": ("top", "side"),
    "cereal-box": ("side", "top"),
    "milk-box": ("side", "top"),
    "mug": ("handle", "side"),
    "cup": ("handle", "side"),
    "tray": ("two-hand",),
}
DEFAULT_GRASPS: tuple[str, ...] = ("top", "side")


def is_atomic_action(action_type: str) -> bool:
    return action_type in ATOMIC_TO_MOTION


def motion_for_atomic(action_type: str) -> str:
    try:
        return ATOMIC_TO_MOTION[action_type]
    except KeyError:
        raise UnknownAtomicAction(action_type) from None


class UnknownAtomicAction(KeyError):
    def __init__(self, action_type: str):
        super().__init__(action_type)
        self.action_type = action_type

    def __str__(self) -> str:
        return f"no motion mapping for atomic action type '{self.action_type}'"
