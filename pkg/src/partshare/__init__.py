"""Hierarchical compositional models with part sharing on multi-scale lattices."""
from .lattice import LatticeHierarchy, build_hierarchy
from .dictionary import (Configuration, HierarchicalDictionary, PartType, RegimeSpec,
                         build_regime_dictionary, shared_subpart_count)
from .generative import FeatureImage, ParseTree, Scene, render, sample_parse, sample_scene, scene_log_likelihood_ratio
from .inference import Detection, EvidenceTable, OpCounter, bottom_up, detect_all, leaf_evidence, select_models, top_down
from .oracle import brute_force_global_evidence, brute_force_map

__all__ = [
    "LatticeHierarchy", "build_hierarchy",
    "Configuration", "HierarchicalDictionary", "PartType", "RegimeSpec",
    "build_regime_dictionary", "shared_subpart_count",
    "FeatureImage", "ParseTree", "Scene", "render", "sample_parse", "sample_scene", "scene_log_likelihood_ratio",
    "Detection", "EvidenceTable", "OpCounter", "bottom_up", "detect_all", "leaf_evidence", "select_models", "top_down",
    "brute_force_global_evidence", "brute_force_map",
]
