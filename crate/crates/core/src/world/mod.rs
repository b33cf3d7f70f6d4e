//! Scenes as metric occupancy grids with placed objects.

mod generate;
mod geodesic;
mod grid;
mod scene_file;

pub use generate::{free_space_connected, generate_scene, navigable_connected, scene_id_for_seed, SceneParams};
pub use geodesic::{geodesic_distance, path_length, shortest_path, success_zone, DistanceField, GoalRegion};
pub use grid::{
    normalize_heading, wrap_degrees, Category, GridMap, ObjectInstance, Point, Pose, CLEARANCE_CAP,
    DEFAULT_AGENT_RADIUS, DEFAULT_CELL_SIZE, FIRST_INSTANCE_ID, MAX_INSTANCE_ID, NAV_EPSILON, SEMANTIC_FLOOR,
    SEMANTIC_WALL,
};
pub use scene_file::{load_scene, save_scene, SCENE_MAGIC, SCENE_VERSION};
