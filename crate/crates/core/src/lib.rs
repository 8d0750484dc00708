//! Flow-rate observer and traffic-anomaly detector for a TCP/AQM bottleneck.

pub mod cli;
pub mod dde;
pub mod fixtures;
pub mod linearizer;
pub mod lmi;
pub mod observer;
pub mod pipeline;
pub mod plant;
pub mod scenario;
pub mod svg;
pub mod topology;
