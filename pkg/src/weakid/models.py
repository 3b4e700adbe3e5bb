"""Built-in benchmark models with their generating coefficients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from weakid.library import FeatureLibrary, Term, ode_poly_trig_library, pde_poly_library


@dataclass(frozen=True)
class ModelSpec:
    name: str
    library: FeatureLibrary  # discovery library
    truth: dict  # component -> {Term: coefficient}
    u0: tuple = ()
    t_span: tuple = (0.0, 1.0)
    n_t: int = 2

    def true_matrix(self, library: FeatureLibrary | None = None) -> np.ndarray:
        lib = library or self.library
        W = np.zeros((len(lib), lib.components))
        for c, terms in self.truth.items():
            for term, v in terms.items():
                W[lib.index(term), c] = v
        return W

    def support(self, library: FeatureLibrary | None = None):
        W = self.true_matrix(library)
        return [tuple(np.flatnonzero(W[:, c])) for c in range(W.shape[1])]


def _mono(*powers):
    return Term(tuple(powers))


def logistic() -> ModelSpec:
    lib = ode_poly_trig_library(1, 2)
    return ModelSpec("logistic", lib, {0: {_mono(1): 1.0, _mono(2): -1.0}},
                     (0.1,), (0.0, 10.0), 512)


def lorenz(sigma=10.0, rho=28.0, beta=8.0 / 3.0) -> ModelSpec:
    lib = ode_poly_trig_library(3, 2)
    truth = {
        0: {_mono(1, 0, 0): -sigma, _mono(0, 1, 0): sigma},
        1: {_mono(1, 0, 0): rho, _mono(0, 1, 0): -1.0, _mono(1, 0, 1): -1.0},
        2: {_mono(1, 1, 0): 1.0, _mono(0, 0, 1): -beta},
    }
    return ModelSpec("lorenz", lib, truth, (-8.0, 7.0, 27.0), (0.0, 10.0), 1001)


def fitzhugh_nagumo(a=0.7, b=0.8, eps=0.08, current=0.5) -> ModelSpec:
    lib = ode_poly_trig_library(2, 3)
    truth = {
        0: {_mono(0, 0): current, _mono(1, 0): 1.0, _mono(3, 0): -1.0 / 3.0, _mono(0, 1): -1.0},
        1: {_mono(0, 0): eps * a, _mono(1, 0): eps, _mono(0, 1): -eps * b},
    }
    return ModelSpec("fitzhugh_nagumo", lib, truth, (-1.0, 1.0), (0.0, 100.0), 2001)


KS_TERMS = (Term((2,), (1,)), Term((1,), (2,)), Term((1,), (4,)))


def kuramoto_sivashinsky(K=6, P=6) -> ModelSpec:
    lib = pde_poly_library(K, P)
    truth = {0: dict(zip(KS_TERMS, (-0.5, -1.0, -1.0)))}
    return ModelSpec("ks", lib, truth, (), (0.0, 150.0), 301)


MODELS = {
    "logistic": logistic,
    "lorenz": lorenz,
    "fitzhugh_nagumo": fitzhugh_nagumo,
    "ks": kuramoto_sivashinsky,
}
