"""Symbolic derivations, a lazy-intruder solver and symbolic equivalence checking."""

from .terms import App, Const, DeductionSystem, Term, Var, nonce

__all__ = ["App", "Const", "DeductionSystem", "Term", "Var", "nonce", "load_dy"]


def load_dy() -> DeductionSystem:
    """The bundled Dolev-Yao deduction system."""
    from importlib.resources import files
    from .frontend.syntax import parse_theory
    return parse_theory(files(__package__).joinpath("data/dy.thy").read_text())[1]
