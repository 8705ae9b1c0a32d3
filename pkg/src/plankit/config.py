"""Tunable constants for the whole stack, grouped in one place.

Every threshold that shapes behavior (geometry margins, budgets, retry
counts) lives here so scenarios and tests can pin or override them without
touching module code.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Config:
    # --- robot geometry ---
    reach_min: float = 0.35          # inner radius of the reach annulus (m)
    reach_max: float = 0.90          # outer radius of the reach annulus (m)
    shoulder_offset: float = 0.22    # lateral shoulder offset from base center (m)
    shoulder_height: float = 1.15    # arm lines slope from here down to the target (m)
    robot_radius: float = 0.28       # base disc radius for navigation clearance (m)
    torso_min: float = 0.0
    torso_max: float = 0.35
    arm_z_lo: float = 0.25           # reachable height band is [arm_z_lo + torso, arm_z_hi + torso]
    arm_z_hi: float = 1.15
    camera_height: float = 1.40

    # --- manipulation thresholds ---
    grasp_radius: float = 0.05       # tool-to-object attach distance (m)
    single_hand_cog: float = 0.15    # beyond this COG offset only two-hand grasps work (m)
    tall_object_top_limit: float = 0.22   # top grasps slip on objects taller than this (m)
    approach_clearance: float = 0.04      # corridor half-width that must be free of neighbors (m)
    stability_margin: float = 0.02   # support polygon erosion for stable placement (m)
    placement_tol: float = 0.10      # "object is at destination" tolerance (m)
    occlusion_open_fraction: float = 0.5  # container counts as open at/after this joint fraction

    # --- candidate generation ---
    ring_radii: tuple[float, ...] = (0.5, 0.7, 0.9)
    ring_headings: int = 16
    heading_sectors: int = 8         # pose buckets used as learnable parameter
    surface_grid_step: float = 0.05  # placement candidate grid resolution (m)
    lift_heights: dict[str, float] = field(
        default_factory=lambda: {"low": 0.10, "mid": 0.20, "high": 0.30})
    lower_heights: dict[str, float] = field(
        default_factory=lambda: {"low": 0.03, "mid": 0.08})

    # --- budgets ---
    scheduler_step_budget: int = 100_000
    motion_step_budget: int = 1_000
    default_max_retries: int = 3     # implicit retry points around parameter queries
    epl_candidate_cap: int = 64
    uninformed_sample_budget: int = 500
    projection_budget: int = 5       # candidates examined by the prospective model
    kb_depth_limit: int = 64

    # --- motion step sizes ---
    base_step: float = 0.25          # base translation per simulator step (m)
    arm_step: float = 0.30           # tcp translation per simulator step (m)
    joint_steps: int = 4             # simulator steps to drive a container joint full range

    # --- learning ---
    laplace_alpha: float = 1.0

    # --- acceptance knobs ---
    experience_retry_drop: float = 0.25  # required relative retry reduction for the learned model


DEFAULT = Config()
