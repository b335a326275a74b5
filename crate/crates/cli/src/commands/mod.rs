pub mod bench;
pub mod compare;
pub mod fig2;
pub mod sim;

use vslam_core::sim::SweepOptions;

use crate::config::RunConfig;

pub(crate) fn sweep_options(config: &RunConfig) -> SweepOptions {
    SweepOptions {
        parallel: !config.sequential,
        jobs: config.jobs,
    }
}
