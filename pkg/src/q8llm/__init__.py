"""Grouped int8 transformer inference with a cycle-table hardware model."""

from .quant import (
    QuantizationError,
    QuantizedTensor,
    QuantStats,
    ShapeError,
    dequantize_tensor,
    qmatmul,
    quantize_group,
    quantize_into,
    quantize_tensor,
)
from .model import (
    CONFIG_110M,
    CapacityError,
    ModelConfig,
    RunState,
    TransformerWeights,
    attention_layer,
    forward,
    rmsnorm,
    rope_rotate,
    softmax_inplace,
    swiglu,
)
from .tokenizer import (
    BOS_ID,
    EOS_ID,
    Tokenizer,
    TokenizerFormatError,
    byte_level_pieces,
    load_tokenizer,
    write_tokenizer,
)
from .sampler import SamplerConfig, Xorshift64Star, sample
from .evaluate import EvalError, load_token_ids, perplexity, perplexity_over_windows
from .perf import (
    CycleTable,
    CycleTableFormatError,
    EnergyProfile,
    PerfModelError,
    PipelineParams,
    analytic_matmul_cycles,
    builtin_cycle_table,
    calibrate_attention_multiplicity,
    calibrate_matmul_model,
    check_time_consistency,
    compose_forward_cycles,
    efficiency_report,
    energy_per_token_mwh,
    format_efficiency_report,
    forward_latency_ms,
    load_cycle_table,
    throughput_toks_per_s,
)
from .checkpoint import (
    CheckpointFormatError,
    Fp32Weights,
    fp32_checkpoint_nbytes,
    load_fp32_checkpoint,
    load_quantized_checkpoint,
    quantize_weights,
    quantized_checkpoint_nbytes,
    write_fp32_checkpoint,
    write_quantized_checkpoint,
)

__version__ = "0.1.0"
