//! Library surface of the `lift3d` command-line tool. The binary is a thin
//! argument parser over these functions; tests and the acceptance suite call
//! them directly.

pub mod commands;
pub mod config;
pub mod svgplot;

pub use commands::{
    cmd_eval, cmd_lift, cmd_plot_bev, cmd_sweep, cmd_synth_gen, cmd_train, load_eval_frames,
    loss_log_path_for, priors_path_for, TrainSummary,
};
pub use config::RunConfig;
