from .bundle import (
    BundleError,
    DepthMap,
    GroundTruth,
    LightSource,
    NormalMap,
    SceneBundle,
    ViewRecord,
    light_arrays,
    load_bundle,
    save_bundle,
)
from .synthetic import SyntheticSceneConfig, generate_synthetic_scene, ring_lights

__all__ = [
    "BundleError", "DepthMap", "GroundTruth", "LightSource", "NormalMap", "SceneBundle",
    "ViewRecord", "light_arrays", "load_bundle", "save_bundle", "SyntheticSceneConfig",
    "generate_synthetic_scene", "ring_lights",
]
