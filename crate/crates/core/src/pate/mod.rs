//! Teacher-ensemble training of synthetic data from aggregated gradient votes.

mod data;
pub(crate) mod net;
mod probe;
mod run;
mod student;
mod teacher;

pub use data::{partition_dataset, Dataset, DatasetSpec, PartitionHandle};
pub use net::Mlp;
pub use probe::{ProbeConfig, SoftmaxProbe};
pub use run::{
    run_pate, GeneratorConfig, PateConfig, RoundRecord, RunReport, StudentMode, TeacherSchedule,
};
pub use student::{generator_fit, student_update, Generator};
pub use teacher::{teacher_gradient, teacher_step, Sample, TeacherModel};
