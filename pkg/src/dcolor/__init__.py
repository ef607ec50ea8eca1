"""Automatic grayscale colorization from a reference image corpus."""

from .clustering import (Cluster, ClusterConfig, ClusterItem, KMeansResult,
                         adaptive_cluster_train, kmeans, mu_required)
from .features import (DaisyParams, SemanticMap, assemble_descriptor,
                       assemble_field, daisy_field, patch_feature, patch_field,
                       semantic_feature)
from .globaldesc import (GistParams, compute_gist, cosine_similarity,
                         select_cluster, semantic_histogram)
from .image import (ChromaPlanes, ColorImage, GrayImage, fit_chroma_to_gamut,
                    psnr, rgb_to_yuv, yuv_to_rgb)
from .mlp import (Network, TrainConfig, backward, forward, hidden_sizes_for,
                  init_network, loss, train)
from .pipeline import (EngineConfig, EvaluationReport, Model, ReferencePair,
                       colorize, colorize_with_network, evaluate, train_model,
                       training_error)
from .refine import BilateralParams, gaussian_blur, joint_bilateral, joint_bilateral_stack

__version__ = "0.1.0"
