"""Arranged minibatches (independent, coordinated, LSH-refined) for SGNS embeddings."""

from .arrangement import (CooStream, Designation, IndStream, Microbatch, Minibatch,
                          MicrobatchStream, RefinedStream, build_minibatch, coo_draw,
                          coo_draw_batch, ind_draw, ind_draw_batch)
from .data import (AssociationMatrix, BlocksConfig, TestSplit, generate_blocks, load_matrix,
                   load_reviews, save_matrix, split_train_test, weighted_jaccard)
from .lsh import (LshMap, adaptive_refine, angular_lsh_map, jaccard_lsh_map, oracle_refine,
                  refine)
from .metrics import (BlocksEvaluator, MetricSample, SplitEvaluator, SubEpochCounts,
                      Trajectory, cosine_gap, cosine_move_experiment, empirical_jaccard,
                      precision_at_k, training_gain)
from .config import ExperimentConfig, load_config, parse_config
from .schedule import ArrangementSchedule, Counters, Distribution, schedule_next
from .selection import (SelectionConfig, Selected, load_selection, run_selection_experiment,
                        save_selection, select_examples)
from .trainer import (EmbeddingModel, TrainConfig, apply_minibatch, init_model, loss_terms,
                      score, train)
from .verify import SUITES, VerifyReport, run_suite

__version__ = "0.1.0"
