"""Online residual vehicle-dynamics learning with partitioned local GP
dictionaries, committee aggregation, and model-predictive controllers."""

from .bcm import BcmConfig, bcm_predict, bcm_predict_batch, full_gp_predict
from .errors import (
    CapExceeded,
    ConfigError,
    CrashDetected,
    DomainError,
    NumericalError,
    OutOfRegion,
    SchemaError,
    SolverFailure,
    SplitgpError,
)
from .gp import Hyperparams, LabeledSample, Prediction, kernel, posterior
from .learner import (
    DictionaryStore,
    FlatStore,
    LearnerConfig,
    LocalDictionary,
    UpdateOutcome,
    load_store,
    save_store,
)
from .models import IolResidualModel, SplitResidualModel
from .plant import PlantPerturbation, SafetyEnvelope, plant_step
from .region import RegionSpec, cell_of, check_validity, is_valid
from .vehicle import (
    ControlInput,
    TireParams,
    VehicleParams,
    VehicleState,
    continuous_dynamics,
    discretize,
    features,
    linearize,
    residual_label,
    slip_angles,
    tire_lateral_force,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
