//! Welch t-test and Holm correction against reference values from scipy
//! (`ttest_ind(equal_var=False)`) and statsmodels (`multipletests(method="holm")`).

use memgrad_core::stats::{holm_adjusted, holm_bonferroni, stat_report, welch_t_test};

struct Case {
    a: &'static [f64],
    b: &'static [f64],
    t: f64,
    df: f64,
    p: f64,
}

const CASES: [Case; 20] = [
    Case {
        a: &[-2.1134, -2.5319, -1.0757, -0.2836],
        b: &[-0.4185, -0.5455, -2.1126, -2.5428, 0.4199, -1.2208, -0.3492, -2.8499],
        t: -0.4542737617720503,
        df: 7.034311877885424,
        p: 0.6633174067279353,
    },
    Case {
        a: &[1.3296, -1.1577, -0.17, 0.5582, -0.3103, 0.124, 0.1558, 0.8236],
        b: &[-0.0819, 0.2366, 0.0637, 1.3047, -0.706, 0.9076, -0.4799, -0.9609, 0.918],
        t: 0.09500202294573513,
        df: 14.872660166044382,
        p: 0.9255813922569693,
    },
    Case {
        a: &[-1.9579, 2.7041, -0.3662, 2.9497, 4.7751, 1.426, -0.3002, 2.2944],
        b: &[-0.6163, 0.5696, 0.5068],
        t: 1.4885538586965428,
        df: 8.970730767394022,
        p: 0.17089226582144548,
    },
    Case {
        a: &[-0.2487, -1.5238, -2.1469],
        b: &[1.6147, 1.6676, 2.0505, 1.5838, 1.9885, 1.8759],
        t: -5.496009973508864,
        df: 2.0871031483417983,
        p: 0.028691459813482794,
    },
    Case {
        a: &[1.8151, -0.5848, -0.0225, 0.1373, 0.6399, -1.0157, -1.4928, -0.7879],
        b: &[-0.0306, 0.0558],
        t: -0.471908378912662,
        df: 7.181340843093434,
        p: 0.6509953648418937,
    },
    Case {
        a: &[0.6242, 1.1582, 0.7699, 0.9529],
        b: &[-0.2283, -4.2366, -2.7955],
        t: 2.7985681644525315,
        df: 2.0389249150670743,
        p: 0.10521416406870245,
    },
    Case {
        a: &[
            0.4393, -0.1159, 0.7575, -1.2855, 0.446, 0.2478, 0.1141, 2.1195, -1.2658, 0.4652, 0.5296,
        ],
        b: &[0.759, -0.0574],
        t: -0.25779435350087393,
        df: 2.134182082535162,
        p: 0.8193145215697833,
    },
    Case {
        a: &[1.3078, 1.9137, 1.9002, 2.2595, 1.6601, -1.1932],
        b: &[0.1535, 0.3473, 1.9266, 1.6514, 3.2785, 2.6169, 0.9766, 1.9282],
        t: -0.4704340110716134,
        df: 9.83596397246256,
        p: 0.6483028746365072,
    },
    Case {
        a: &[-6.2616, -0.627, 0.9397, 3.0772, 1.3525, 5.3949, 4.4226],
        b: &[1.4151, 1.5411, 1.2033, 1.8048, 1.8733],
        t: -0.2591914475325286,
        df: 6.085054544286869,
        p: 0.8040334250183747,
    },
    Case {
        a: &[
            3.2041, 1.8284, -0.1169, 5.8122, 2.7393, 0.3389, 0.945, 7.0063, 4.2138, 2.9058, 0.8506,
        ],
        b: &[-3.5449, -0.5766, -1.1562, -3.3293],
        t: 4.770003042055556,
        df: 8.312769281541456,
        p: 0.0012664202047394468,
    },
    Case {
        a: &[2.755, -1.868, -7.1606],
        b: &[
            -1.517, -1.7795, -1.1865, -0.4838, -1.0374, -0.3759, -0.805, -0.5786, -0.3257, -0.3861,
        ],
        t: -0.43345175339018155,
        df: 2.0129166452527256,
        p: 0.7067191182558337,
    },
    Case {
        a: &[
            -5.1212, -0.9413, -2.8887, 2.2781, -3.5636, -2.9179, -3.1629, -3.7219, -1.8403,
        ],
        b: &[
            -2.4151, 0.0729, 0.4874, 1.7947, -0.8842, 0.2115, 2.139, -1.2064, 0.3727, -0.0916,
        ],
        t: -3.0072082220664735,
        df: 13.299336404298304,
        p: 0.009880820530358273,
    },
    Case {
        a: &[1.5961, -0.0651, 1.0054, 1.088, 1.1346, 0.3907],
        b: &[0.4964, 1.562, -0.8536, -0.0699, 0.9958, 0.7589, -1.5443],
        t: 1.3942158238087687,
        df: 9.516641792332873,
        p: 0.1949450718216786,
    },
    Case {
        a: &[1.8006, 3.1028, 3.7572, -0.783, 0.0091, -1.6833],
        b: &[-0.8504, -1.3097, 0.1698, 0.3485, 0.3356],
        t: 1.3512730662618837,
        df: 6.408532058467653,
        p: 0.22236143474153736,
    },
    Case {
        a: &[-1.5137, -2.0539, -1.7465, -1.0432, -1.4479],
        b: &[
            1.6639, 1.5302, 1.3342, 0.8629, 0.1567, 0.8718, 0.6087, 1.0885, 1.2942, 0.4254,
        ],
        t: -11.162515286110487,
        df: 10.385450635021229,
        p: 4.1094525194073924e-07,
    },
    Case {
        a: &[-0.5506, -0.505, -0.4707, -0.5067, -0.521, -0.5305, -0.2325],
        b: &[0.1661, -2.6828, 3.0585, 0.0939, -0.4316, 1.3421],
        t: -0.9384990273209945,
        df: 5.028154593014587,
        p: 0.3908462044296976,
    },
    Case {
        a: &[0.1938, 1.8857, 1.6304],
        b: &[
            0.7289, 0.8127, 0.7211, 0.8844, 0.8521, 0.8706, 0.8568, 0.7413, 0.5684, 0.9649, 0.9407,
        ],
        t: 0.8029279719636931,
        df: 2.017304019516818,
        p: 0.5056448295097106,
    },
    Case {
        a: &[1.2661, 0.2156, -0.1069, -0.0127, -1.1763, -0.1882],
        b: &[-0.0884, 0.0764],
        t: 0.01692604128725381,
        df: 5.561558400865737,
        p: 0.987086312018562,
    },
    Case {
        a: &[-1.4376, -1.5093, -1.446, -1.4677, -1.3636, -1.2951, -1.3066, -1.4643],
        b: &[1.6196, 1.9416, 1.989, 1.92],
        t: -37.05784673389865,
        df: 3.6911219470337664,
        p: 6.971130519015927e-06,
    },
    Case {
        a: &[0.6449, -6.1839, -4.5189, -0.6068],
        b: &[
            -0.7264, 1.6132, -0.8776, -0.7466, 1.2014, 0.9309, 2.8392, 2.246, 0.4175, -0.1562,
        ],
        t: -2.0118023966948133,
        df: 3.4088640171361373,
        p: 0.12669706775770892,
    },
];

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn welch_matches_reference_cases() {
    for (i, c) in CASES.iter().enumerate() {
        let r = welch_t_test(c.a, c.b).unwrap();
        assert!(rel(r.t, c.t) < 1e-10, "case {i}: t {} vs {}", r.t, c.t);
        assert!(rel(r.df, c.df) < 1e-10, "case {i}: df {} vs {}", r.df, c.df);
        assert!(rel(r.p, c.p) < 1e-8, "case {i}: p {} vs {}", r.p, c.p);
    }
}

#[test]
fn holm_matches_reference() {
    let p = [0.01, 0.04, 0.03, 0.005, 0.2, 0.6];
    let expected_adj = [0.05, 0.12, 0.12, 0.03, 0.4, 0.6];
    let expected_rej = [true, false, false, true, false, false];
    for (a, e) in holm_adjusted(&p).iter().zip(expected_adj) {
        assert!((a - e).abs() < 1e-12, "{a} vs {e}");
    }
    assert_eq!(holm_bonferroni(&p, 0.05).unwrap(), expected_rej);
}

#[test]
fn published_accuracy_lists() {
    let groups = vec![
        ("bp".to_string(), vec![90.62, 91.18, 89.89, 87.87, 90.44]),
        ("sff".to_string(), vec![88.05, 90.44, 87.68, 89.89, 91.36]),
        ("cf".to_string(), vec![91.18, 90.62, 89.52, 90.44, 86.03]),
    ];
    let report = stat_report(&groups, 0.05).unwrap();
    let expected = [0.586, 0.697, 0.951];
    for (t, e) in report.pairwise.iter().zip(expected) {
        assert!((t.p - e).abs() <= 0.002, "{} vs {}: {}", t.a, t.b, t.p);
        assert!(!t.reject);
    }
}

#[test]
fn degenerate_inputs() {
    assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    assert!(welch_t_test(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    assert_eq!(welch_t_test(&[1.0, 1.0], &[1.0, 1.0]).unwrap().p, 1.0);
    assert_eq!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).unwrap().p, 0.0);
    assert!(holm_bonferroni(&[0.1], 0.0).is_err());
    assert!(stat_report(&[("only".to_string(), vec![1.0, 2.0])], 0.05).is_err());
}
