from .lma import EmStep, LmaConfig, OptTrace, TraceStep, em_irls_step, irls_lma, marginal_log_likelihood

__all__ = ["LmaConfig", "OptTrace", "TraceStep", "EmStep", "irls_lma", "em_irls_step", "marginal_log_likelihood"]
