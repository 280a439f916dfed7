use std::ffi::CStr;
use std::process::Command;
use std::ptr;

use rtpmatch_ffi::*;

fn last_error() -> String {
    let p = rtp_last_error_message();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cost(data: &[f64], rows: usize, cols: usize) -> *mut RtpCost {
    let mut out = ptr::null_mut();
    let s = unsafe { rtp_cost_new(data.as_ptr(), rows, cols, &mut out) };
    assert_eq!(s, RtpStatus::Ok);
    assert!(!out.is_null());
    out
}

fn plan_values(plan: *const RtpPlan) -> (usize, usize, Vec<f64>) {
    let (mut m, mut n) = (0, 0);
    assert_eq!(
        unsafe { rtp_plan_dims(plan, &mut m, &mut n) },
        RtpStatus::Ok
    );
    let mut buf = vec![0.0; m * n];
    assert_eq!(
        unsafe { rtp_plan_copy(plan, buf.as_mut_ptr(), buf.len()) },
        RtpStatus::Ok
    );
    (m, n, buf)
}

#[test]
fn sinkhorn_meets_uniform_marginals() {
    let c = cost(&[0.0, 1.0, 0.5, 1.0, 0.0, 0.5, 0.3, 0.3, 0.3], 3, 3);
    for log_domain in [0, 1] {
        let mut plan = ptr::null_mut();
        let s = unsafe {
            rtp_sinkhorn(
                c,
                ptr::null(),
                ptr::null(),
                0.1,
                1e-10,
                10_000,
                log_domain,
                &mut plan,
            )
        };
        assert_eq!(s, RtpStatus::Ok);
        let (m, n, g) = plan_values(plan);
        assert_eq!((m, n), (3, 3));
        for j in 0..3 {
            let row: f64 = g[j * 3..j * 3 + 3].iter().sum();
            assert!((row - 1.0 / 3.0).abs() < 1e-8);
        }
        for i in 0..3 {
            let col: f64 = (0..3).map(|j| g[j * 3 + i]).sum();
            assert!((col - 1.0 / 3.0).abs() < 1e-8);
        }
        let mut d = RtpDiagnostics::default();
        assert_eq!(unsafe { rtp_plan_diagnostics(plan, &mut d) }, RtpStatus::Ok);
        assert_eq!(d.converged, 1);
        assert!(d.iterations > 0);
        unsafe { rtp_plan_free(plan) };
    }
    unsafe { rtp_cost_free(c) };
}

#[test]
fn unbalanced_variants_and_bad_variant() {
    let c = cost(&[0.1, 0.9, 0.8, 0.2, 0.5, 0.5], 3, 2);
    for variant in [RTP_VARIANT_DAMPED, RTP_VARIANT_LITERAL] {
        let mut plan = ptr::null_mut();
        let s = unsafe {
            rtp_unbalanced(
                c,
                ptr::null(),
                ptr::null(),
                0.01,
                0.05,
                1e-9,
                100_000,
                variant,
                &mut plan,
            )
        };
        assert_eq!(s, RtpStatus::Ok, "{}", last_error());
        let (m, n, g) = plan_values(plan);
        assert_eq!((m, n), (3, 2));
        assert!(g.iter().all(|v| v.is_finite() && *v >= 0.0));
        unsafe { rtp_plan_free(plan) };
    }
    let mut plan = ptr::null_mut();
    let s = unsafe {
        rtp_unbalanced(
            c,
            ptr::null(),
            ptr::null(),
            0.01,
            0.05,
            1e-9,
            100,
            7,
            &mut plan,
        )
    };
    assert_eq!(s, RtpStatus::InvalidArgument);
    assert!(last_error().contains("variant"));
    assert!(plan.is_null());
    unsafe { rtp_cost_free(c) };
}

#[test]
fn hungarian_square_and_background() {
    let c = cost(&[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0], 3, 3);
    let mut assign = [usize::MAX; 3];
    let mut total = 0.0;
    assert_eq!(
        unsafe { rtp_hungarian(c, assign.as_mut_ptr(), &mut total) },
        RtpStatus::Ok
    );
    assert_eq!(assign, [1, 0, 2]);
    assert_eq!(total, 5.0);
    unsafe { rtp_cost_free(c) };

    let c = cost(&[0.1, 0.9, 0.9, 0.2, 0.9, 0.9], 3, 2);
    let mut to_gt = [7i64; 3];
    assert_eq!(
        unsafe { rtp_hungarian_background(c, 0.5, to_gt.as_mut_ptr(), &mut total) },
        RtpStatus::Ok
    );
    assert_eq!(to_gt, [0, 1, -1]);
    assert!((total - 0.8).abs() < 1e-12);

    let mut assign = [0usize; 3];
    assert_eq!(
        unsafe { rtp_hungarian(c, assign.as_mut_ptr(), &mut total) },
        RtpStatus::NotSquare
    );
    unsafe { rtp_cost_free(c) };
}

#[test]
fn errors_are_reported() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { rtp_cost_new(ptr::null(), 2, 2, &mut out) },
        RtpStatus::NullPointer
    );
    assert!(last_error().contains("data"));
    let bad = [0.0, f64::NAN];
    assert_eq!(
        unsafe { rtp_cost_new(bad.as_ptr(), 1, 2, &mut out) },
        RtpStatus::InvalidArgument
    );
    assert!(out.is_null());

    let c = cost(&[0.0, 1.0, 1.0, 0.0], 2, 2);
    let mu = [0.7, 0.7];
    let mut plan = ptr::null_mut();
    let s = unsafe { rtp_sinkhorn(c, mu.as_ptr(), ptr::null(), 0.1, 1e-9, 100, 0, &mut plan) };
    assert_eq!(s, RtpStatus::InvalidMarginals);

    let far = cost(&[5.0, 6.0, 6.0, 5.0], 2, 2);
    let s = unsafe { rtp_sinkhorn(far, ptr::null(), ptr::null(), 1e-3, 1e-9, 100, 0, &mut plan) };
    assert_eq!(s, RtpStatus::KernelUnderflow);
    let s = unsafe {
        rtp_sinkhorn(
            far,
            ptr::null(),
            ptr::null(),
            1e-3,
            1e-9,
            100_000,
            1,
            &mut plan,
        )
    };
    assert_eq!(s, RtpStatus::Ok, "{}", last_error());
    unsafe {
        rtp_plan_free(plan);
        rtp_cost_free(far);
    }

    let s = unsafe { rtp_sinkhorn(c, ptr::null(), ptr::null(), 0.1, 1e-9, 1000, 0, &mut plan) };
    assert_eq!(s, RtpStatus::Ok);
    assert!(rtp_last_error_message().is_null());
    let mut short = [0.0; 3];
    assert_eq!(
        unsafe { rtp_plan_copy(plan, short.as_mut_ptr(), 3) },
        RtpStatus::DimensionMismatch
    );
    unsafe {
        rtp_plan_free(plan);
        rtp_cost_free(c);
        rtp_cost_free(ptr::null_mut());
        rtp_plan_free(ptr::null_mut());
    }
}

#[test]
fn adaptive_epsilon_matches_log_rule() {
    let mut e = 0.0;
    assert_eq!(
        unsafe { rtp_adaptive_epsilon(0.2, 10, &mut e) },
        RtpStatus::Ok
    );
    assert!((e - 0.2 / 10f64.ln()).abs() < 1e-15);
    assert_eq!(
        unsafe { rtp_adaptive_epsilon(0.2, 10, ptr::null_mut()) },
        RtpStatus::NullPointer
    );
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/rtpmatch.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in [
        "rtp_cost_new",
        "rtp_unbalanced",
        "rtp_hungarian_background",
        "RTP_STATUS_KERNEL_UNDERFLOW",
        "typedef struct RtpPlan RtpPlan",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    match Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    {
        Ok(out) => assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        ),
        Err(_) => eprintln!("cc not found; skipping header compile check"),
    }
}
