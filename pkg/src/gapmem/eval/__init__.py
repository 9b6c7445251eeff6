from .bench import MEMORIES, VARIANTS, Providers, RunReport, run_ablation, run_grid, variant_config
from .locomo import CATEGORIES, Conversation, QARecord, load_locomo, parse_locomo
from .metrics import ndcg_at_k, pr_auc, recall_at_k, rouge_l, spearman, token_f1
from .oracle import OracleLabel, OracleTier, ValidationRow, oracle_label, validate_classifier

__all__ = [
    "CATEGORIES",
    "MEMORIES",
    "VARIANTS",
    "Conversation",
    "OracleLabel",
    "OracleTier",
    "Providers",
    "QARecord",
    "RunReport",
    "ValidationRow",
    "load_locomo",
    "ndcg_at_k",
    "oracle_label",
    "parse_locomo",
    "pr_auc",
    "recall_at_k",
    "rouge_l",
    "run_ablation",
    "run_grid",
    "spearman",
    "token_f1",
    "validate_classifier",
    "variant_config",
]
