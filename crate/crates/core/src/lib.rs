//! Logic locking with two-state reconfigurable gates.
//!
//! The crate is organised as a small pipeline:
//!
//! * [`netlist`]: `.bench` parsing, bit-parallel evaluation and unit-delay depth analysis.
//! * [`rgate`]: behavioural model of a reconfigurable gate with a non-volatile
//!   polarization state and a write-endurance budget.
//! * [`locking`]: the replacement pass that turns NAND/NOR/AND/OR gates into rGates
//!   (replacement types A-D), plus the locked-netlist text format.
//! * [`keycore`]: a toy single-cycle register machine whose internal bits are the key,
//!   driven by instruction sequences.
//! * [`attack`]: oracle-guided key search, either by direct key traversal or through the
//!   key-generating core.
//! * [`metrics`]: analytic traversal-cost model and error-rate / Hamming-distance sweeps.
//!
//! ```
//! use rgatelock::{netlist::parse_bench, locking::{lock_netlist, LockPolicy}};
//!
//! let c17 = parse_bench(include_str!("../../../data/iscas85/c17.bench")).unwrap();
//! let locked = lock_netlist(&c17, &LockPolicy::new(2, 7)).unwrap();
//! assert_eq!(locked.key_width(), 2);
//! ```

pub mod attack;
pub mod bits;
pub mod demo;
pub mod keycore;
pub mod locking;
pub mod metrics;
pub mod netlist;
pub mod rgate;
pub mod stats;

pub use bits::BitVector;
pub use locking::{LockPolicy, LockedNetlist, ReplacementType};
pub use netlist::{GateKind, NetId, Netlist};
pub use rgate::{Polarization, RGate, RGateKind};
