"""Polylingual labeled topic models, with LDA, Labeled LDA and PLTM as special cases."""

__version__ = "0.1.0"

from .corpus import (  # noqa: E402
    Corpus,
    CorpusError,
    Document,
    HeldOutSplit,
    RawDocument,
    Vocabulary,
    build_vocabulary,
    encode_corpus,
    load_corpus,
    save_corpus,
    split_held_out,
)
from .eval import (  # noqa: E402
    IntrusionTask,
    PerplexityReport,
    fold_in,
    generate_intrusion_task,
    perplexity,
    perplexity_curve,
    top_terms,
)
from .model import (  # noqa: E402
    LabelMask,
    ModelConfig,
    ModelState,
    TrainedModel,
    build_label_mask,
    estimate_theta,
    full_conditional,
    gibbs_sweep,
    init_state,
    train,
)
from .persist import load_model, save_model  # noqa: E402
from .synth import GroundTruth, exact_posterior, generate_corpus, match_topics  # noqa: E402
