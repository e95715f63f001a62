//! Multi-task objective (next-item cross-entropy, in-batch contrastive
//! regularization, frequency-domain L1 alignment), Adam, the training step
//! and a finite-difference gradient checker.

mod gradcheck;
mod loss;
mod optim;
mod step;

pub use gradcheck::{grad_check, GradCheckLoss, GradCheckReport, FD_EPSILON};
pub use loss::{
    contrastive_loss, contrastive_loss_grad, freq_reg_loss, freq_reg_loss_grad, rec_loss,
    rec_loss_grad, total_loss, LossBreakdown, LossWeights,
};
pub use optim::{Adam, TrainConfig};
pub use step::{
    batch_gradient, train_step, BatchLags, BatchResult, EpochLog, Objective, PassControl, Trainer,
};
