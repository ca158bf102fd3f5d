"""Deep k-Means: joint autoencoder representation learning and k-Means clustering."""

from .clustering import ClusterModel, dkm_gradients, dkm_objective, kmeans, lloyd_kmeans
from .data import LabeledDataset, make_blobs, validation_split
from .evaluation import accuracy_hungarian, ari, clustering_scores, contingency, nmi, t_test
from .nn import DenseNetwork, build_network
from .training import TrainPlan, build_annealing_sequence, run_variant, train

__version__ = "0.1.0"
