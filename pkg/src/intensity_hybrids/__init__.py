"""Double-slit intensity hybrids: superclassical fields, trajectories and screens."""
from .packets import (TAU, ExperimentSetup, PacketParams, PacketSample, SetupError,
                      build_setup, packet_eval, sigma_t)
from .fields import CoherenceMode, FieldSample, two_slit
from .attenuation import (AttenuatedField, AttenuationKind, AttenuationMode,
                          apply_stochastic, deterministic_intensity, theoretical_visibility)
from .trajectories import (IntegratorConfig, Slit, Termination, Trajectory, integrate,
                           integrate_batch, launch_positions)

__version__ = "0.1.0"
