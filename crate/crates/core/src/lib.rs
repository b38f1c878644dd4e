//! Proprioceptive collision isolation and identification for a planar 3-RRR
//! parallel robot.
//!
//! The pipeline runs from the robot model through closed-chain kinematics and
//! operational-space dynamics to a momentum observer. From the observer's
//! wrench estimate it extracts line-of-action features, classifies the
//! collided body, and localizes the contact on the platform hull or along a
//! second link.

pub mod classifiers;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod features;
pub mod isolation;
pub mod kinematics;
pub mod model;
pub mod observer;
pub mod planar;
pub mod report;

pub use classifiers::fnn::{fnn_forward, fnn_train, Arch, FnnModel, TrainConfig};
pub use classifiers::{dt_classify, evaluate, BodyLabel, Classifier, ConfusionMatrix, DtParams};
pub use dynamics::{dyn_terms, DynTerms, Wrench, WrenchFrame};
pub use error::{Error, Result};
pub use features::{compute_features, line_of_action, FeatureVector, LineOfAction};
pub use isolation::{pf_histogram, pf_init, pf_step, platform_isolate, ParticleSet, PfConfig, PlatformContact};
pub use kinematics::{
    contact_jacobians, forward_kinematics, inverse_kinematics, jacobians, ContactLocation, ContactSpec, Joints,
    KinState, Pose,
};
pub use model::{default_model, load_model, save_model, RobotModel};
pub use observer::{detect, observer_step, ObserverState};
pub use planar::Vec2;
