//! Analytic ground truth for both problems and the dataset builder.

pub mod cycloid;
pub mod dataset;
pub mod fit;
pub mod obstacle;
pub mod solution;

pub use cycloid::{solve_brachistochrone, CycloidSolution};
pub use dataset::{build_dataset, BuildOptions, Dataset, DatasetMeta, SamplingRanges, TrajectoryRecord};
pub use fit::{fit_control_points, Fit};
pub use obstacle::{solve_obstacle_path, visibility_graph_length, PathSegment, Side, TangentArcPath};
pub use solution::{oracle_solution, OracleSolution, OBSTACLE_PLAN_MARGIN};
