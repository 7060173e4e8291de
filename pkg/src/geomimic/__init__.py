"""Graph-structured geometric task functions from demonstration feature
tracks, with an uncalibrated visual-servoing controller and a deterministic
simulator for desk-scale verification."""

from .estimator import ConstraintSelector
from .evaluation import (
    accuracy,
    column_dispersion,
    consistency,
    correspondence_matrix,
    success_rate,
)
from .geometry import (
    ConstraintType,
    HomogeneousLine,
    PixelPoint,
    error_vector,
    line_from_points,
    ll_error,
    pl_error,
    pp_error,
)
from .graphs import (
    EnumerationLimits,
    FeaturePoint,
    GraphInstance,
    canonical_key,
    enumerate_instances,
    spec_for,
)
from .model import (
    SelectionResult,
    TaskFunctionParams,
    encode,
    gradient,
    init_params,
    load_model,
    save_model,
    score,
    select,
)
from .servo import (
    ServoConfig,
    ServoTrace,
    broyden_update,
    control_step,
    estimate_initial_jacobian,
    servo_loop,
)
from .sim import (
    Camera,
    GoalSpec,
    HammerTemplate,
    RigidObjectModel,
    Scene,
    SerialArmPlant,
    TwistPlant,
    generate_category,
    generate_demo,
    make_scene,
    render_frame,
)
from .training import (
    DemoVideo,
    StateChangeSample,
    TrainConfig,
    covgs_il,
    momentum_blend,
    prepare_datasets,
    similarity_loss,
    temporal_order_loss,
)

__version__ = "0.1.0"
