use bsrd_core::hypothesis_checker::{classify, CertificatePattern, SearchBudget, VerdictStatus};
use bsrd_core::reaction_model::builtin;

#[test]
fn min_system_and_signaling_are_verified() {
    let budget = SearchBudget::default();
    for name in ["min_system", "signaling"] {
        let (sys, _) = builtin(name).unwrap();
        let v = classify(&sys, &budget);
        println!("{}", v.to_table(name));
        assert_eq!(v.status, VerdictStatus::HypothesesVerified, "{name}");
        assert_eq!(v.pattern, Some(CertificatePattern::Chained));
    }
}
