"""Single-radio relative positioning and GPS jamming for counter-drone pursuit."""

from .controller import (RadioAction, RadioMode, SwitchEvent, SwitchingState, compute_threshold,
                         controller_tick, predicted_jam_episode, step_mode, update_drift_error)
from .errors import (ContractViolation, DegenerateGeometry, InfeasibleCalibration,
                     InsufficientTransmitters, ScenarioError, SingularInnovation)
from .harness import (MetricsReport, SimLog, batch_run, calibrate_jamming, compute_metrics,
                      pursuit_step, run_scenario, simulate_and_score)
from .jamming import GpsLinkState, JamGeometry, JamParams, gps_link, jam_to_signal
from .positioning import (EkfConfig, NavState, RangeObservation, ekf_predict, ekf_update,
                          estimate_position, invert_pathloss, lsq_position, multilaterate_lsq)
from .scenario import (ControllerParams, ScenarioConfig, Transmitter, Waypoint3D, load_scenario,
                       reference_scenario, rng_stream)
from .sweep import BandMoments, SweepFrame, extract_moments, select_transmitters, simulate_sweep
from .vision import BoxObservation, calibrate_focal, depth_distance, horizontal_distance

__version__ = "0.1.0"
