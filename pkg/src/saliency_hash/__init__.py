"""Attention-guided deep hashing for image retrieval, built on a small numpy autograd."""
from .attention import SpatialAttention, attention_gate, spatial_attention
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, SyntheticSpec, gen_synthetic, load_dataset, split_manifest
from .errors import (BadMagicError, ContractError, DataError, DivergenceError, FormatError,
                     SaliencyHashError, ShapeError, ShapeMismatchError, TruncatedFileError,
                     VersionMismatchError)
from .index import CodeIndex, CodeSet, HashRecord, build_index, hamming_distance, query_topk, \
    read_codes, write_codes
from .metrics import MetricsReport, ap_at_k, evaluate, hr_at_k, rr_at_k
from .model import AshConfig, HashCode, HashModel, binarize, build_model, encode_batch
from .pipeline import RunConfig, run_experiment, sweep
from .tensor import Tensor, make_rng, no_grad, randn_seeded
from .training import SGD, LossConfig, PairSampler, TrainPlan, pairwise_loss, sample_pairs, train

__version__ = "0.1.0"
