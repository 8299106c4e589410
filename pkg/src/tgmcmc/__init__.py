"""Tree-guided MCMC for normalized random measure mixtures."""
from .crm import CrmPrior, PriorKind
from .likelihood import DirichletMultinomial, GaussianWishart, Stats

__version__ = "0.1.0"
