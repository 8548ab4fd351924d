from .config import (AttackConfig, AttackOutcome, BLACK_BOX_METHODS,
                     METHODS, WHITE_BOX_METHODS, default_steps, project_ball)
from .blackbox import (black_box_attack, estimate_gradient, model_loss_fn,
                       nes_gradient, spsa_gradient)
from .runner import (AttackSummary, evaluate_under_attack,
                     find_min_perturbation, outcome_records, run_attack,
                     run_black_box_attack, run_transfer_attack,
                     run_white_box_attack, write_outcomes_jsonl)
