from .corruptions import (CORRUPTION_KINDS, NOISE_KINDS, SEVERITY_TABLES,
                          CorruptionSpec, apply_corruption, corrupt_dataset)
from .sequences import (NOISE_SEQUENCE_KINDS, SEQUENCE_KINDS,
                        PerturbationSequence, build_perturbation_sequences,
                        build_sequence)
from .typographic import (COORDS_CIFAR_STYLE, COORDS_IMAGENET_STYLE,
                          TypographicSpec, default_font_scale,
                          generate_typographic_dataset, render_text_block,
                          sample_coordinates, sample_target)
from .toydata import (SHAPE_NAMES, build_caption_corpus, generate_toy_dataset)
