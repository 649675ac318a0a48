"""Battery-backed challenge-reply authentication with a simulated li-ion pack.

The pack's live electrochemical state is the root of trust: a master
issues 64-bit challenges naming cells to self-authenticate against their
dynamically updated models, and the outstation folds the measured pack
state into every reply, so identical challenges never repeat a reply and
a captured table goes stale after one round.
"""

from .battery import Bess, CellParams, CellState, PackConfig, create_pack
from .crseq import (
    BessState,
    CellReplyTable,
    Challenge,
    TransformSpec,
    apply_transform,
    build_temp_reply,
    decode_challenge,
    encode_challenge,
    init_crt,
    quantize_bs,
    reverse_transform,
    update_crt,
)
from .ducm import AuthCheck, Ducm, Tolerance, reliability
from .endpoints import (
    Abort,
    AbortReason,
    EventLog,
    MasterSession,
    OutstationSession,
    Verdict,
    enroll,
)
from .gauge import FuelGauge, GaugeConfig, Measurement, MeasurementTrace
from .harness import ScenarioConfig, export_crseq_dataset, load_config, run_session

__version__ = "0.1.0"

__all__ = [
    "Bess", "CellParams", "CellState", "PackConfig", "create_pack",
    "BessState", "CellReplyTable", "Challenge", "TransformSpec",
    "apply_transform", "build_temp_reply", "decode_challenge",
    "encode_challenge", "init_crt", "quantize_bs", "reverse_transform",
    "update_crt",
    "AuthCheck", "Ducm", "Tolerance", "reliability",
    "Abort", "AbortReason", "EventLog", "MasterSession", "OutstationSession",
    "Verdict", "enroll",
    "FuelGauge", "GaugeConfig", "Measurement", "MeasurementTrace",
    "ScenarioConfig", "export_crseq_dataset", "load_config", "run_session",
]
