//! Procedural parametric body: blendshapes, joint regression, skinning and OBJ export.

mod model;
mod obj;
mod synth;

pub use model::{
    regress_joints, shape_mesh, skin, tree_from_joints, BodyModel, Mesh, ShapeParams, SparseRow,
};
pub use obj::{export_obj, parse_obj, write_obj};
pub use synth::{
    default_body_model, synth_body_model, DEFAULT_SHAPE_DIMS, DEFAULT_VERTEX_BUDGET,
    SHAPE_COMPONENT_NAMES, TEMPLATE_HEIGHT,
};
