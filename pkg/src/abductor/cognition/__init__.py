from .oracle import OracleCognition, findings_to_update, recalibrate
from .port import (
    Analysis,
    AnalysisFinding,
    CognitionPort,
    Instruction,
    Observation,
    Report,
    ToolEnvironment,
)
from .remote import RemoteCognition

__all__ = [
    "Analysis",
    "AnalysisFinding",
    "CognitionPort",
    "Instruction",
    "Observation",
    "OracleCognition",
    "RemoteCognition",
    "Report",
    "ToolEnvironment",
    "findings_to_update",
    "recalibrate",
]
