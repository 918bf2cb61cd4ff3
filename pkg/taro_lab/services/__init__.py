"""
Training, attack, evaluation and analysis services for taro-lab
"""
from taro_lab.services.attacks import (
    attack_supervised_eval,
    attack_targeted,
    attack_targeted_contrastive,
    attack_untargeted_ssl,
    pgd_ascend,
    project_linf,
)
from taro_lab.services.data_service import (
    Dataset,
    LabeledSplit,
    augment_views,
    generate_clusters,
    load_csv_dataset,
    load_dataset,
    save_csv_dataset,
    save_dataset,
)
from taro_lab.services.evaluation_service import (
    analyze_targets,
    evaluate_run,
    linear_evaluation,
    robust_linear_evaluation,
    transfer_evaluation,
)
from taro_lab.services.losses import (
    loss_cross_entropy,
    loss_nt_xent,
    loss_ours_rocl_attack,
    loss_ss,
    loss_taro_contrastive,
    loss_taro_ss,
    loss_targeted_attack,
)
from taro_lab.services.persistence import export_embeddings, load_checkpoint, save_checkpoint
from taro_lab.services.target_selection import (
    Pairing,
    random_targets,
    score_entropy,
    score_similarity,
    select_targets,
    target_class_distribution,
)
from taro_lab.services.theory_service import (
    LinearProblem,
    brute_force_max,
    objective_ntxent,
    objective_ss,
    objective_targeted,
    theorem1_experiment,
    theorem2_experiment,
)
from taro_lab.services.training_service import (
    AdversarialTrainer,
    representation_spread,
    train_model,
    train_taro_contrastive,
    train_taro_positive_pair,
    train_untargeted_baseline,
)

__all__ = [
    "attack_supervised_eval",
    "attack_targeted",
    "attack_targeted_contrastive",
    "attack_untargeted_ssl",
    "pgd_ascend",
    "project_linf",
    "Dataset",
    "LabeledSplit",
    "augment_views",
    "generate_clusters",
    "load_csv_dataset",
    "load_dataset",
    "save_csv_dataset",
    "save_dataset",
    "analyze_targets",
    "evaluate_run",
    "linear_evaluation",
    "robust_linear_evaluation",
    "transfer_evaluation",
    "loss_cross_entropy",
    "loss_nt_xent",
    "loss_ours_rocl_attack",
    "loss_ss",
    "loss_taro_contrastive",
    "loss_taro_ss",
    "loss_targeted_attack",
    "export_embeddings",
    "load_checkpoint",
    "save_checkpoint",
    "Pairing",
    "random_targets",
    "score_entropy",
    "score_similarity",
    "select_targets",
    "target_class_distribution",
    "LinearProblem",
    "brute_force_max",
    "objective_ntxent",
    "objective_ss",
    "objective_targeted",
    "theorem1_experiment",
    "theorem2_experiment",
    "AdversarialTrainer",
    "representation_spread",
    "train_model",
    "train_taro_contrastive",
    "train_taro_positive_pair",
    "train_untargeted_baseline",
]
