"""Knowledge-guided RBF surrogates via a generator over the interpolation null space."""

from .generator import GeneratorNet, backward, forward, init_generator
from .priors import PriorKind, PriorTerm, gaussian_kl, total_loss
from .rbf import Dataset, KernelSpec, RbfSystem, build_system
from .training import BaselineRbf, SurrogateEnsemble, TrainConfig, fit_rbfgen, train_rbfgen

__version__ = "0.1.0"
