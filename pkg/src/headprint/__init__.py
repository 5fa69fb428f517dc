"""Head-movement side-channel video identification simulator."""

from .geometry import Frame, Quaternion, make_quaternion, rotate_vector
from .trace import HeadMovementTrace
from .fingerprint import FingerprintLibrary, SaliencyMap, SynthSpec, VideoFingerprint
from .simulate import DriftModel, NoiseSpec, VictimParams
from .matcher import Calibrator, MatchConfig, MatchResult
from .openworld import bdr, base_rate, fpr_from_tpr

__version__ = "0.1.0"
