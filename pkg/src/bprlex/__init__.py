"""Word translation as matrix completion with Bayesian Personalized Ranking."""

from .core import (AuxBundle, AuxModel, FeatureStore, LatentFactors, Provenance, Side,
                   TranslationGraph, TranslationPair, Vocabulary, score_aux_combined,
                   score_aux_single, score_mf, sigmoid)
from .errors import (BprlexError, CheckpointError, ColdScoringImpossible, ConfigError,
                     DataError, PrerequisiteError, TrainingDivergence)
from .mapping import (MappingModel, MapTrainConfig, SeedPairs, apply_map, build_word_aux_store,
                      train_linear_map, train_nn_map)
from .predictor import BackoffPolicy, ModelSet, Predictor, RankedList, Tier, classify_tier, \
    rank_candidates, top_k
from .training import (TrainConfig, Triple, bpr_triple_objective, sample_triple, sgd_step_aux,
                       sgd_step_mf, train_aux, train_mf)
from .evaluation import GoldSet, acc_at_k, build_test_split, seed_ablation
from .baselines import cnn_avgmax, cosine_rank, visual_rank

__version__ = "0.1.0"
