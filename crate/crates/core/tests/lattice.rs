use std::collections::BTreeSet;

use cylwalk::lattice::{
    linf_distance, neighbors, project_to_cylinder, CylinderPoint, LatticePoint, Pattern, TorusParams, TorusTable, Window,
};
use proptest::prelude::*;

fn params(n: u32, d: usize) -> TorusParams {
    TorusParams::new(n, d).unwrap()
}

#[test]
fn encode_decode_is_a_bijection() {
    for (n, d) in [(3, 2), (5, 2), (4, 3)] {
        let p = params(n, d);
        let mut seen = BTreeSet::new();
        for idx in 0..p.volume() as u32 {
            let y = p.decode(idx);
            assert!(y.iter().all(|&c| c < n));
            assert_eq!(p.encode(&y), idx);
            seen.insert(y);
        }
        assert_eq!(seen.len() as u64, p.volume());
    }
}

#[test]
fn table_agrees_with_neighbour_list() {
    let p = params(5, 2);
    let table = TorusTable::new(p);
    for idx in 0..p.volume() as u32 {
        let x = CylinderPoint { y: p.decode(idx), z: 3 };
        let nbrs = neighbors(&x, &p);
        assert_eq!(nbrs.len(), 2 * (p.d() + 1));
        for slot in 0..2 * p.d() {
            assert_eq!(p.decode(table.step(idx, slot as u32)), nbrs[slot].y);
            assert_eq!(nbrs[slot].z, 3);
        }
        assert_eq!(nbrs[2 * p.d()].z, 2);
        assert_eq!(nbrs[2 * p.d() + 1].z, 4);
    }
}

#[test]
fn neighbour_relation_is_symmetric_at_distance_one() {
    let p = params(4, 2);
    for idx in 0..p.volume() as u32 {
        let x = CylinderPoint { y: p.decode(idx), z: 0 };
        for q in neighbors(&x, &p) {
            assert_eq!(linf_distance(&x, &q, &p), 1);
            assert!(neighbors(&q, &p).contains(&x));
        }
    }
}

#[test]
fn patterns_parse_and_print() {
    let k: Pattern = "[(0,0,0), (1,0,0), (1,0,0)]".parse().unwrap();
    assert_eq!(k.len(), 2);
    assert_eq!(k.diameter(), 1);
    let again: Pattern = k.literal().parse().unwrap();
    assert_eq!(again, k);
    assert!("[(0,0),(1,0,0)]".parse::<Pattern>().is_err());
    assert!("[(0,0,0".parse::<Pattern>().is_err());
    assert_eq!(Pattern::block(&[2, 2, 1]).len(), 4);
}

#[test]
fn windows_detect_wrapping() {
    let p = params(3, 2);
    let k: Pattern = "[(0,0,0),(3,0,0)]".parse().unwrap();
    let w = Window::new(CylinderPoint::origin(&p), k, &p).unwrap();
    assert!(w.wrapped);
    assert!(w.ensure_unwrapped().is_err());

    let p = params(10, 2);
    let w = Window::new(CylinderPoint::new(&[9, 0], 5, &p).unwrap(), Pattern::block(&[2, 1, 2]), &p).unwrap();
    assert!(!w.wrapped);
    assert_eq!(w.z_range(), Some((5, 6)));
    let ys: BTreeSet<Vec<u32>> = w.sites().iter().map(|s| s.point(&p).y).collect();
    assert!(ys.contains(&vec![0, 0]));
}

proptest! {
    #[test]
    fn projection_wraps_coordinates(y0 in -100i64..100, y1 in -100i64..100, z in -50i64..50, n in 2u32..12) {
        let p = params(n, 2);
        let q = project_to_cylinder(&LatticePoint::new(vec![y0, y1, z]), &p).unwrap();
        prop_assert_eq!(q.y[0] as i64, y0.rem_euclid(n as i64));
        prop_assert_eq!(q.y[1] as i64, y1.rem_euclid(n as i64));
        prop_assert_eq!(q.z, z);
        let back = q.site(&p).point(&p);
        prop_assert_eq!(back, q);
    }

    #[test]
    fn cylinder_distance_never_exceeds_lattice_distance(
        a in proptest::collection::vec(-20i64..20, 3),
        b in proptest::collection::vec(-20i64..20, 3),
        n in 2u32..9,
    ) {
        let p = params(n, 2);
        let (la, lb) = (LatticePoint::new(a), LatticePoint::new(b));
        let d = linf_distance(&project_to_cylinder(&la, &p).unwrap(), &project_to_cylinder(&lb, &p).unwrap(), &p);
        prop_assert!(d <= la.linf_distance(&lb));
        prop_assert!(d >= la.coords[2].abs_diff(lb.coords[2]));
    }
}
