"""Unsupervised sentence compression with additive-noise denoising auto-encoders."""

from .corpus import (
    EmbeddingMatrix,
    OovTable,
    Vocabulary,
    build_vocabulary,
    decode_with_oov,
    encode_with_oov,
    load_embeddings,
)
from .evaluation import RougeReport, RougeScore, evaluate, rouge_l, rouge_n
from .inference import DecodeSpec, baseline_f8w, compress, compress_sweep
from .model import ModelConfig, Seq2Seq, check_gradients, forward_nll
from .noising import NoiseConfig, NoisedExample, make_training_example
from .training import TrainConfig, Trainer, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
