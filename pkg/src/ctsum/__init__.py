"""Frame-sequence summarization for fast spoken intent classification.

The pipeline: latent frame sequences are projected to label posteriors,
greedy-decoded or summarized down to one representative frame per
argmax-label segment, and classified by a recurrent intent model. A
synthetic corpus generator and an evaluation harness make the whole
comparison reproducible on a desk machine.
"""

from ._version import __version__
from .cts import (
    CompressionStats,
    Segment,
    SummarizedSequence,
    compression_stats,
    read_sseq,
    segment_path,
    select_representatives,
    summarize,
    write_sseq,
)
from .ctc import (
    LabelSequence,
    collapse_path,
    ctc_forward_logprob,
    decode_path,
    enumerate_alignments_logprob,
    greedy_decode,
)
from .harness import (
    HarnessConfig,
    SystemId,
    bench_rtf,
    evaluate,
    run_crossval,
    run_system,
    strip_timing,
    validate_report,
)
from .lu import (
    LUConfig,
    LUModel,
    embed_labels,
    gradient_check,
    load_model,
    lu_classify,
    lu_forward,
    lu_init,
    lu_train,
    save_model,
)
from .seqcore import (
    FormatError,
    FramePath,
    LatentSequence,
    PosteriorGrid,
    ProjectionMatrix,
    Vocabulary,
    frame_argmax,
    project_softmax,
    read_lseq,
    read_proj,
    read_vocab,
    write_lseq,
    write_proj,
    write_vocab,
)
from .synth import (
    Corpus,
    SynthSpec,
    Utterance,
    build_corpus,
    generate_corpus,
    generate_utterance,
    kfold_split,
    load_corpus,
    make_templates,
    plant_projection,
)

__all__ = [
    "__version__",
    "CompressionStats",
    "Segment",
    "SummarizedSequence",
    "compression_stats",
    "read_sseq",
    "segment_path",
    "select_representatives",
    "summarize",
    "write_sseq",
    "LabelSequence",
    "collapse_path",
    "ctc_forward_logprob",
    "decode_path",
    "enumerate_alignments_logprob",
    "greedy_decode",
    "HarnessConfig",
    "SystemId",
    "bench_rtf",
    "evaluate",
    "run_crossval",
    "run_system",
    "strip_timing",
    "validate_report",
    "LUConfig",
    "LUModel",
    "embed_labels",
    "gradient_check",
    "load_model",
    "lu_classify",
    "lu_forward",
    "lu_init",
    "lu_train",
    "save_model",
    "FormatError",
    "FramePath",
    "LatentSequence",
    "PosteriorGrid",
    "ProjectionMatrix",
    "Vocabulary",
    "frame_argmax",
    "project_softmax",
    "read_lseq",
    "read_proj",
    "read_vocab",
    "write_lseq",
    "write_proj",
    "write_vocab",
    "Corpus",
    "SynthSpec",
    "Utterance",
    "build_corpus",
    "generate_corpus",
    "generate_utterance",
    "kfold_split",
    "load_corpus",
    "make_templates",
    "plant_projection",
]
