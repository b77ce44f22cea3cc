//! Functional forward/backward kernels. Every backward here has a
//! finite-difference check in the test suite.

mod conv;
mod linear;
mod norm;
mod pool;

pub use conv::{conv1d, conv1d_backward, conv2d, conv2d_backward, ConvGeom, ConvGrads};
pub use linear::{linear, linear_backward};
pub use norm::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, update_running_stats, BnCache, BN_EPS,
    BN_MOMENTUM,
};
pub use pool::{
    adaptive_avg_pool1d, adaptive_avg_pool1d_backward, adaptive_window, avg_pool2,
    avg_pool2_backward, gem_pool, gem_pool_backward, global_avg_pool, global_avg_pool_backward,
    relu, relu_backward, GEM_CLAMP,
};
