"""Cross-modal face matching with per-point multi-modal RBMs."""

from importlib.metadata import PackageNotFoundError, version

from .archive import ModelArchive, load_model, read_model, save_model, write_model
from .bank import RbmBank
from .evaluation import EvalReport, SplitPlan, rank1, run_protocol, vr_at_far
from .features import GaborBankSpec, extract_face, fit_warp, load_template
from .head import ProjectionHead
from .multimodal import MultiModalRBM, infer_shared
from .pipeline import HeterogeneousMatcher, PipelineConfig
from .rbm import GaussianRBM, TrainConfig

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"

__all__ = [
    "EvalReport", "GaborBankSpec", "GaussianRBM", "HeterogeneousMatcher", "ModelArchive",
    "MultiModalRBM", "PipelineConfig", "ProjectionHead", "RbmBank", "SplitPlan",
    "TrainConfig", "extract_face", "fit_warp", "infer_shared", "load_model", "load_template",
    "rank1", "read_model", "run_protocol", "save_model", "vr_at_far", "write_model",
]
