//! Graph neural network teachers: GCN, GraphSAGE, GAT, APPNP and SGC,
//! their supervised pretraining and the frozen soft-label bank.

mod bank;
mod config;
mod model;
mod train;

pub use bank::{compute_soft_labels, soft_labels_of, TeacherBank, SIMPLEX_TOLERANCE};
pub use config::{Arch, TeacherConfig};
pub use model::{
    appnp_forward, gat_forward, gcn_forward, propagate_ppr, sage_forward, sgc_forward, GnnModel,
    GraphOps, GAT_NEGATIVE_SLOPE,
};
pub use train::{pretrain_teacher, EpochRecord, TrainedTeacher};
