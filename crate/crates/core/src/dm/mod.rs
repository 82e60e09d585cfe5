//! Finite-alphabet MAC with state known to both encoders: inner and outer
//! rate bounds, the class-Γ test and policy search.

pub mod channel;
pub mod info;
pub mod policy;
pub mod search;

pub use channel::{builtin_channel, class_gamma_check, BuiltinKind, FiniteChannel, GammaCheck};
pub use info::{mutual_information, Joint, Var};
pub use policy::{
    build_joint, inner_diagnostic, inner_rate_triple, outer_rate_triple, Cards, InnerPolicy,
    OuterPolicy, RateTriple,
};
pub use search::{
    containment, maximize_both, maximize_inner, maximize_inner_with, maximize_outer,
    maximize_outer_from, Containment, DmRegion,
};
