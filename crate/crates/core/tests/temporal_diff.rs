use chrono::NaiveDate;
use credigraph_core::fixtures::{diff_fixture, MonthGraph};
use credigraph_core::graph::{write_edges, NodeDictionary};
use credigraph_core::temporal::{assemble_snapshot, build_temporal_graph, diff_snapshots, SnapshotFiles, SnapshotGraph};

fn write_month(dir: &std::path::Path, id: &str, date: NaiveDate, month: &MonthGraph) -> SnapshotGraph {
    std::fs::create_dir_all(dir).unwrap();
    NodeDictionary::from_sorted(month.keys.clone()).unwrap().write(dir.join("dict.txt")).unwrap();
    write_edges(dir.join("edges.bin"), month.edges.iter().copied()).unwrap();
    let files = SnapshotFiles { dictionary: "dict.txt".into(), edges: "edges.bin".into(), degrees: "degrees.bin".into(), ..Default::default() };
    assemble_snapshot(dir, id, date, files, None).unwrap()
}

#[test]
fn planted_changes_are_reported_exactly() {
    let cases = [(100u64, 10u64, 25u64, 40u64, 15u64), (250, 0, 0, 100, 100), (37, 80, 3, 0, 37), (8, 1, 1, 8, 0)];
    for (i, &(overlap, gone, fresh, up, down)) in cases.iter().enumerate() {
        let f = diff_fixture(overlap, gone, fresh, up, down, i as u64);
        let dir = tempfile::tempdir().unwrap();
        let prev = write_month(&dir.path().join("prev"), "CC-MAIN-2024-46", NaiveDate::from_ymd_opt(2024, 11, 4).unwrap(), &f.prev);
        let next = write_month(&dir.path().join("next"), "CC-MAIN-2024-51", NaiveDate::from_ymd_opt(2024, 12, 2).unwrap(), &f.next);
        let d = diff_snapshots(&prev, &next).unwrap();
        assert_eq!(d.overlap_nodes, overlap);
        assert_eq!(d.new_nodes, fresh);
        assert_eq!(d.vanished_nodes, gone);
        assert_eq!(d.out_degree_increased, up);
        assert_eq!(d.out_degree_decreased, down);
        assert_eq!(d.out_degree_increased_fraction, Some(f.increased_fraction()));
        let reopened = SnapshotGraph::open(dir.path().join("next").join("manifest.json")).unwrap();
        assert_eq!(reopened.manifest.counts.edges, f.next.edges.len() as u64);
        let g = build_temporal_graph(vec![next.manifest.clone(), prev.manifest.clone()]).unwrap();
        assert_eq!(g.snapshots[0].snapshot_id, "CC-MAIN-2024-46");
    }
}

#[test]
fn planted_forty_percent() {
    let f = diff_fixture(500, 20, 30, 200, 50, 8);
    let dir = tempfile::tempdir().unwrap();
    let prev = write_month(&dir.path().join("a"), "a", NaiveDate::from_ymd_opt(2024, 11, 4).unwrap(), &f.prev);
    let next = write_month(&dir.path().join("b"), "b", NaiveDate::from_ymd_opt(2024, 12, 2).unwrap(), &f.next);
    let d = diff_snapshots(&prev, &next).unwrap();
    assert_eq!(d.out_degree_increased_fraction, Some(0.4));
}
