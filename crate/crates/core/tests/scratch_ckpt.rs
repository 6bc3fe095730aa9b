use glassgrasp::field::{save_field, load_field, DensityField, FieldConfig};
use glassgrasp::math::{Aabb, Vec3};

#[test]
fn find_mismatch() {
    let cfg = FieldConfig { init_seed: 8, ..FieldConfig::default() };
    let field = DensityField::new(cfg, Aabb::new(Vec3::ZERO, Vec3::splat(1.0))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.json");
    save_field(&path, &field).unwrap();
    let back = load_field(&path).unwrap();
    let a = field.hash_encode(Vec3::splat(0.5)).unwrap();
    let b = back.hash_encode(Vec3::splat(0.5)).unwrap();
    assert_eq!(field.param_count(), back.param_count(), "param count");
    let mut mismatches = 0;
    for lvl in 0..cfg.levels {
        for slot in 0..cfg.table_size() {
            let ra = field.table_row(lvl, slot);
            let rb = back.table_row(lvl, slot);
            if ra != rb {
                if mismatches < 5 {
                    println!("lvl {lvl} slot {slot}: {ra:?} vs {rb:?}");
                    for (x, y) in ra.iter().zip(rb) {
                        println!("  bits {:x} vs {:x}", x.to_bits(), y.to_bits());
                    }
                }
                mismatches += 1;
            }
        }
    }
    println!("mismatching rows: {mismatches}");
    assert_eq!(a, b);
    assert_eq!(mismatches, 0);
}
