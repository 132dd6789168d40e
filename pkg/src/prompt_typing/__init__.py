"""Prompt-learning for fine-grained entity typing.

Library and CLI for verbalizer-based type scoring over a masked language
model: hard and soft prompt templates, supervised and few-shot tuning, a
fine-tuning baseline, hierarchical typing metrics, and self-supervised
distribution-level pretraining for the zero-shot setting.
"""

from .errors import (
    CapabilityError,
    ConfigurationError,
    DataError,
    DegenerateScoreError,
    EncodeError,
    PairGenerationError,
    PromptTypingError,
    RenderError,
    SchemaError,
    TrainingError,
)
from .schema_verbalizer import (
    EntityType,
    LabelSchema,
    RelatedWordSource,
    Verbalizer,
    build_verbalizer,
    expand_hierarchy,
    parse_label_schema,
)
from .templates import (
    HIDE_TOKEN,
    MASK_TOKEN,
    PromptedInput,
    TemplateSpec,
    apply_hiding,
    render,
    render_hard,
    render_soft,
)
from .mlm_backend import (
    BackendVocabulary,
    EncoderState,
    MaskDistribution,
    MaskedLanguageBackend,
    ToyMlmBackend,
    ToyRuleTable,
)
from .typing_model import (
    FineTuneHead,
    TypeScores,
    ft_scores,
    predict,
    project_distribution,
    score_types,
)
from .datasets import (
    TypingDataset,
    TypingExample,
    load_dataset,
    sample_fewshot,
    sample_fewshot_train_dev,
    save_dataset,
)
from .metrics import EvalResult, evaluate, per_type_report, report_to_csv
from .training import TrainConfig, TrainReport, TrainResult, ft_loss, prompt_loss, train
from .selfsup import (
    LinkedSentence,
    PairDataset,
    PairExample,
    SelfSupConfig,
    TypeDictionary,
    generate_pairs,
    js_similarity,
    pretrain,
    selfsup_loss,
)

__version__ = "0.1.0"
