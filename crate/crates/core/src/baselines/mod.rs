pub mod music;
pub mod phd;
pub mod relax;
pub mod window;
