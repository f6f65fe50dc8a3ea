pub mod fmt;
pub mod mesh;
pub mod spectral;
pub mod forward;
pub mod modes;
pub mod region;
pub mod carleman;
pub mod decay;
pub mod runner;
