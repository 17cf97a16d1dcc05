//! Geometric primitives shared by every stage.

pub mod bvh;
pub mod kdtree;
pub mod mesh;
pub mod voxel;

pub use bvh::{closest_on_segment, closest_on_triangle, ray_triangle, Bvh, ClosestHit};
pub use kdtree::KdTree;
pub use mesh::{spherical, uv_sphere, Aabb, TriangleMesh};
pub use voxel::VoxelGrid;
