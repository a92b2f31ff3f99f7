//! Dense linear algebra, recurrent cells, losses, reverse-mode
//! differentiation and the Adam optimizer. Everything is `f64`.

mod adam;
mod cells;
mod gradcheck;
mod loss;
mod param;
mod tape;
mod tensor;

pub use adam::{adam_step, Adam};
pub use cells::{gru_cell_step, lstm_cell_step, BoundCell, CellKind, CellParams, GateParams};
pub use gradcheck::finite_difference_check;
pub use loss::{argmax, mse, softmax_nll};
pub use param::{Parameter, Parameterized};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
