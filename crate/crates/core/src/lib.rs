//! Active touch-based object recognition: a geometric grasp simulator,
//! triangle-histogram observation models, and a receding-horizon tree
//! planner that picks the next wrist pose to recognize an object in as
//! few grasps as possible.

pub mod contact_sim;
pub mod descriptor;
pub mod geometry;
pub mod harness;
pub mod model;
pub mod planner;
