"""plankit: a plan-language interpreter, kitchen digital twin, and episodic
memory stack for performing underdetermined fetch-and-place tasks."""

from .config import Config, DEFAULT
from .contextualizer import (ActionHierarchy, Expansion, NoSolution, ParamQuery,
                             apply_plan_transformations, default_hierarchy,
                             expand_action_designator, formulate_parameter_query,
                             instantiate_plan, resolve_atomic_to_motion,
                             resolve_location_designator)
from .executive import EpisodeOutcome, Interpreter, interpret_plan
from .geometry import Pose
from .knowledge import (KnowledgeBase, default_kb, query_kb,
                        register_default_computables)
from .models import (Epl, Experience, ExperienceModel, Prospective, Uninformed,
                     resolve_designator_parameters, train_experience_model)
from .motion import (FailureSignal, MotionEvent, MotionParams, MotionPhase,
                     MotionPlan, check_grasp_compatibility, execute_motion,
                     execute_motion_plan)
from .neem import (Neem, NeemRecorder, NeemStore, export_neem, import_neem,
                   query_neems, replay_neem)
from .plan_lang import (Designator, PlanAst, parse_plan, substitute_bindings,
                        unparse_plan, validate_plan)
from .sexpr import Symbol, Variable
from .world import (WorldState, load_world, load_world_file, perceive_detect,
                    reachable_from, serialize_world, snapshot, restore,
                    stable_at, visible_from, world_hash)

__version__ = "0.1.0"
