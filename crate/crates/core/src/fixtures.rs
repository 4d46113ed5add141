//! Hand-built markets used across the test suites and the CLI demo.

use crate::format::{parse_matching, parse_text};
use crate::model::{Instance, Matching};

/// Five doctors, five quota-1 programs, two couples. Under these
/// preferences the market has exactly one stable matching.
pub const FIVE_DOCTOR_TRUTHFUL: &str = "\
smpc v1
program a 1
program b 1
program c 1
program d 1
program e 1
single r0 : a b c d
couple r1 r2 : b,e ; a,d
couple r3 r4 : a,d ; c,e
progrol a : r3 r0 r1
progrol b : r1 r0
progrol c : r3 r0
progrol d : r0 r2 r4
progrol e : r4 r2
";

/// The same market after `r0` reorders its list to `b d c a`.
pub const FIVE_DOCTOR_MANIPULATED: &str = "\
smpc v1
program a 1
program b 1
program c 1
program d 1
program e 1
single r0 : b d c a
couple r1 r2 : b,e ; a,d
couple r3 r4 : a,d ; c,e
progrol a : r3 r0 r1
progrol b : r1 r0
progrol c : r3 r0
progrol d : r0 r2 r4
progrol e : r4 r2
";

pub const FIVE_DOCTOR_TRUTHFUL_MATCHING: &str = "r0=c r1=b r2=e r3=a r4=d";
pub const FIVE_DOCTOR_MANIPULATED_MATCHING: &str = "r0=b r1=a r2=d r3=c r4=e";

pub fn five_doctor_truthful() -> Instance {
    parse_text(FIVE_DOCTOR_TRUTHFUL).expect("fixture parses")
}

pub fn five_doctor_manipulated() -> Instance {
    parse_text(FIVE_DOCTOR_MANIPULATED).expect("fixture parses")
}

pub fn five_doctor_truthful_matching(inst: &Instance) -> Matching {
    parse_matching(inst, FIVE_DOCTOR_TRUTHFUL_MATCHING).expect("fixture parses")
}

pub fn five_doctor_manipulated_matching(inst: &Instance) -> Matching {
    parse_matching(inst, FIVE_DOCTOR_MANIPULATED_MATCHING).expect("fixture parses")
}
