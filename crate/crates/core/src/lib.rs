//! Kernels, state laws, Bernstein–Cole–Hopf transforms, an explicit monotone
//! solver and checks of the maximum principle, growth lemma and decay
//! estimates for `u_t = <A, D²u> - u B·∇u - P'(u) (K∇u)·∇u`.

pub mod analysis;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod montecarlo;
pub mod quadrature;
pub mod solver;
pub mod statelaw;
pub mod transform;
