pub mod data;
pub mod formulations;
pub mod greedy;
pub mod network;
pub mod sgd;
