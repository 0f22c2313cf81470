//! C ABI surface for zeno-ec. Placeholder while the core crate is built.
