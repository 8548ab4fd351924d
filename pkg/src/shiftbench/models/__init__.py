from .base import ClassifierModel, signed_gradient
from .nets import (FeedForwardClassifier, TrainConfig, init_feed_forward,
                   linear_fixture, linear_fixture_example, train_classifier)
from .encoder import (DualEncoder, Tokenizer, contrastive_batch_loss,
                      init_dual_encoder, retrieval_accuracy, train_dual_encoder)
from .zeroshot import ZeroShotClassifier, synthesize_zero_shot_classifier
from .snapshot import (load_classifier, load_encoder, load_snapshot,
                       save_classifier, save_encoder, save_snapshot)
