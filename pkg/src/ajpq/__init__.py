"""Joint channel pruning and mixed-precision quantization driven by a DDPG layer controller."""
from .agent import AgentConfig, DDPGAgent
from .controllers import LayerRule, greedy_budget_enforce
from .evaluator import ClassificationProbe, Dataset, EvalReport, evaluate, forward
from .ir import LayerKind, LayerSpec, NetworkIR, load_model, save_model, total_cost
from .quantizer import QuantMode, QuantPlan, apply_plan
from .search import EpisodeRecord, JointSearch, SearchConfig, run_search

__version__ = "0.1.0"

__all__ = [
    "AgentConfig", "DDPGAgent", "LayerRule", "greedy_budget_enforce", "ClassificationProbe",
    "Dataset", "EvalReport", "evaluate", "forward", "LayerKind", "LayerSpec", "NetworkIR",
    "load_model", "save_model", "total_cost", "QuantMode", "QuantPlan", "apply_plan",
    "EpisodeRecord", "JointSearch", "SearchConfig", "run_search",
]
