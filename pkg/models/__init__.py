"""Domain types"""
from .filters import FilterBank
from .network import LayerConfig, RGNetwork, DenseQP
from .inference import InferenceTrace, CoordinateDescentResult, CopositivityVerdict
from .heads import Tap, CoarseHead, HeadBank
from .training import TrainConfig, Checkpoint, EpochRecord
from .dataset import Sample, DatasetSpec, Dataset
from .reports import PRPoint, EvalReport
